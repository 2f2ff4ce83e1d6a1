"""Channel generators.

Two families live here:

* the Fourier plane-wave series: independent complex Gaussian harmonic
  coefficients whose variances follow a von Mises-Fisher (VMF) angular power
  spectrum mapped onto the wavenumber lattice;
* point-scatterer channels: the exact free-space Green's function sum and its
  Fraunhofer (linear phase) and Fresnel (quadratic phase) approximations.

Scatterer gains carry a per-scatterer variance so the spherical-wave channels
can be scaled to a prescribed expected energy ``E||h||^2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .em import CarrierConfig, PlanarArrayGeometry, WavenumberLattice, unit_vector
from .rng import as_generator, complex_normal


class Provenance(str, enum.Enum):
    EXACT_GREENS = "exact_greens"
    FOURIER_SERIES = "fourier_series"
    FRAUNHOFER = "fraunhofer"
    FRESNEL = "fresnel"


@dataclass(frozen=True)
class ChannelVector:
    samples: np.ndarray
    provenance: Provenance
    rng_seed: int | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("channel has non-finite entries")

    def __len__(self):
        return self.samples.size

    @property
    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)


# ---------------------------------------------------------------------------
# angular power spectrum

@dataclass(frozen=True)
class Cluster:
    mean_direction: tuple
    alpha_vmf: float
    weight: float

    @classmethod
    def from_angles(cls, elevation_deg, azimuth_deg, alpha_vmf, weight=1.0):
        mu = unit_vector(math.radians(elevation_deg), math.radians(azimuth_deg))
        return cls(tuple(float(v) for v in mu), float(alpha_vmf), float(weight))

    @property
    def mu(self) -> np.ndarray:
        return np.asarray(self.mean_direction, dtype=float)


@dataclass(frozen=True)
class AngularPowerSpectrum:
    """Mixture of VMF clusters. Weights are normalised to sum to one.

    ``normalization`` is the target ``E||h||^2``; ``None`` means "number of
    receive elements", resolved when a geometry is known.
    """

    clusters: tuple
    normalization: float | None = None

    def __post_init__(self):
        if not self.clusters:
            raise ValueError("need at least one cluster")
        total = sum(c.weight for c in self.clusters)
        fixed = []
        for c in self.clusters:
            mu = c.mu
            if c.weight <= 0 or c.alpha_vmf < 0:
                raise ValueError("cluster weights must be positive and concentrations non-negative")
            norm = np.linalg.norm(mu)
            if norm == 0 or mu[2] <= 0:
                raise ValueError("cluster mean directions must point into z > 0")
            fixed.append(Cluster(tuple(mu / norm), c.alpha_vmf, c.weight / total))
        object.__setattr__(self, "clusters", tuple(fixed))

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.clusters])

    def target_power(self, geometry: PlanarArrayGeometry | None = None) -> float:
        if self.normalization is not None:
            return float(self.normalization)
        if geometry is None:
            raise ValueError("normalization unset and no geometry to default from")
        return float(geometry.n_elements)


def vmf_log_density(directions, mu, alpha) -> np.ndarray:
    """Log of the VMF density on the unit sphere (per steradian)."""
    cos = np.asarray(directions) @ np.asarray(mu)
    if alpha == 0:
        return np.full(cos.shape, -math.log(4 * math.pi))
    # log(alpha / (4 pi sinh alpha)) written to stay finite for large alpha
    log_c = math.log(alpha) - math.log(2 * math.pi) - alpha - math.log1p(-math.exp(-2 * alpha))
    return log_c + alpha * cos


def mixture_density(spectrum: AngularPowerSpectrum, directions) -> np.ndarray:
    out = 0.0
    for c in spectrum.clusters:
        out = out + c.weight * np.exp(vmf_log_density(directions, c.mu, c.alpha_vmf))
    return out


@dataclass(frozen=True)
class LatticeVariances:
    """Per-lattice-point harmonic variances (zero on evanescent points)."""

    lattice: WavenumberLattice
    variances: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.variances.shape != (len(self.lattice),):
            raise ValueError("one variance per lattice point required")
        if np.any(self.variances < 0):
            raise ValueError("variances must be non-negative")

    @property
    def total(self) -> float:
        return float(self.variances.sum())

    @classmethod
    def from_map(cls, lattice: WavenumberLattice, entries: dict) -> "LatticeVariances":
        """Variances from an explicit ``{(l, m): variance}`` map; others are zero."""
        var = np.zeros(len(lattice))
        for (l, m), v in entries.items():
            var[lattice.index_of(l, m)] = v
        return cls(lattice, var)


def build_vmf_spectrum(spectrum: AngularPowerSpectrum, lattice: WavenumberLattice,
                       carrier: CarrierConfig, geometry: PlanarArrayGeometry | None = None,
                       cell_samples: int = 4) -> LatticeVariances:
    """Map a VMF mixture onto lattice variances.

    The harmonic at ``(l, m)`` collects the power of plane waves whose
    transverse wavenumber falls in its lattice cell. The density per unit
    ``dkx dky`` is the angular density divided by ``k * gamma``, so each
    variance is the cell average of ``density(direction) / gamma`` over
    ``cell_samples**2`` midpoints (only points inside the visible disk count).
    Averaging keeps rim cells finite where ``1/gamma`` blows up. The result is
    scaled to the spectrum's target total power.
    """
    if lattice.propagating_count == 0:
        raise ValueError("lattice has no propagating points")
    if abs(lattice.wavenumber - carrier.k) > 1e-9 * carrier.k:
        raise ValueError("lattice was built for a different carrier")
    k = carrier.k
    dkx = 2 * math.pi / lattice.aperture_x_m
    dky = 2 * math.pi / lattice.aperture_y_m
    s = int(cell_samples)
    if s < 1:
        raise ValueError("cell_samples must be >= 1")
    offs = (np.arange(s) + 0.5) / s - 0.5
    ox, oy = (a.ravel() for a in np.meshgrid(offs * dkx, offs * dky, indexing="ij"))

    prop = lattice.is_propagating
    kx = lattice.kappa_x[prop][:, None] + ox[None, :]
    ky = lattice.kappa_y[prop][:, None] + oy[None, :]
    g2 = k * k - kx ** 2 - ky ** 2
    inside = g2 > 0
    gamma = np.sqrt(np.maximum(g2, (1e-6 * k) ** 2))
    dirs = np.stack([kx / k, ky / k, gamma / k], axis=-1)
    dens = mixture_density(spectrum, dirs)
    cell = np.where(inside, dens / gamma, 0.0).mean(axis=1)

    var = np.zeros(len(lattice))
    var[prop] = cell
    total = var.sum()
    if not total > 0:
        raise ValueError("spectrum puts no power on the lattice")
    var *= spectrum.target_power(geometry) / total
    return LatticeVariances(lattice, var)


def draw_fh_coefficients(variances: LatticeVariances, rng) -> np.ndarray:
    rng = as_generator(rng)
    return complex_normal(rng, variances.variances.size, variances.variances)


def synthesize_farfield(variances: LatticeVariances, basis_fh, rng_seed=None) -> ChannelVector:
    """Fourier plane-wave series channel ``h = sum_lm x_lm a_lm``, ``x_lm ~ CN(0, var_lm)``."""
    if basis_fh.n_atoms != variances.variances.size:
        raise ValueError("basis atoms and lattice variances differ in number")
    x = draw_fh_coefficients(variances, rng_seed)
    h = basis_fh.atoms @ x
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return ChannelVector(h, Provenance.FOURIER_SERIES, seed)


# ---------------------------------------------------------------------------
# point scatterers

@dataclass(frozen=True)
class ClusterScattererSet:
    """Point scatterers in front of the array (z > 0).

    ``gain_variance`` is the variance the gains were drawn with; it sets the
    energy normalisation. ``cluster_index[s]`` maps scatterer ``s`` to its
    entry in ``centroids``.
    """

    positions: np.ndarray
    gains: np.ndarray
    gain_variance: np.ndarray
    cluster_index: np.ndarray
    centroids: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if pos.shape[0] < 1:
            raise ValueError("need at least one scatterer")
        if np.any(pos[:, 2] <= 0):
            raise ValueError("scatterers must lie in front of the array (z > 0)")
        object.__setattr__(self, "positions", pos)

    @property
    def n_scatterers(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def single(cls, position, gain=1.0 + 0j) -> "ClusterScattererSet":
        pos = np.asarray(position, dtype=float).reshape(1, 3)
        g = np.array([gain], dtype=complex)
        return cls(pos, g, np.abs(g) ** 2, np.zeros(1, dtype=np.int64), pos.copy())


def sample_vmf(mu, alpha, n, rng) -> np.ndarray:
    """Draw ``n`` unit vectors from a VMF on the 2-sphere (inverse-CDF for the cosine)."""
    rng = as_generator(rng)
    mu = np.asarray(mu, dtype=float)
    mu = mu / np.linalg.norm(mu)
    u = rng.random(n)
    if alpha > 0:
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * alpha)) / alpha
    else:
        w = 2.0 * u - 1.0
    w = np.clip(w, -1.0, 1.0)
    ang = 2 * math.pi * rng.random(n)
    # orthonormal frame (e1, e2, mu)
    helper = np.array([1.0, 0.0, 0.0]) if abs(mu[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(mu, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(mu, e1)
    r = np.sqrt(1.0 - w * w)
    return (w[:, None] * mu + (r * np.cos(ang))[:, None] * e1
            + (r * np.sin(ang))[:, None] * e2)


def draw_scatterers(spectrum: AngularPowerSpectrum, distance_m: float, rng,
                    per_cluster: int = 20, shell_fraction: float = 0.05,
                    min_z: float = 1e-3) -> ClusterScattererSet:
    """Scatterers for every cluster of ``spectrum`` around ``distance_m``.

    Directions come from the cluster VMF (redrawn until ``z/|p| > min_z``),
    radii are uniform on ``distance * [1 - shell, 1 + shell]`` and gains are
    ``CN(0, weight / per_cluster)``.
    """
    if per_cluster < 1:
        raise ValueError("per_cluster must be >= 1")
    if not distance_m > 0 or not 0 <= shell_fraction < 1:
        raise ValueError("need distance > 0 and 0 <= shell_fraction < 1")
    rng = as_generator(rng)
    pos, gains, gvar, idx, cents = [], [], [], [], []
    for ci, c in enumerate(spectrum.clusters):
        dirs = np.empty((0, 3))
        while dirs.shape[0] < per_cluster:
            d = sample_vmf(c.mu, c.alpha_vmf, per_cluster, rng)
            dirs = np.vstack([dirs, d[d[:, 2] > min_z]])
        dirs = dirs[:per_cluster]
        radii = distance_m * (1.0 + shell_fraction * (2.0 * rng.random(per_cluster) - 1.0))
        v = c.weight / per_cluster
        pos.append(dirs * radii[:, None])
        gains.append(complex_normal(rng, per_cluster, v))
        gvar.append(np.full(per_cluster, v))
        idx.append(np.full(per_cluster, ci, dtype=np.int64))
        cents.append(c.mu * distance_m)
    return ClusterScattererSet(np.vstack(pos), np.concatenate(gains), np.concatenate(gvar),
                               np.concatenate(idx), np.vstack(cents))


def _distances(scatterers: ClusterScattererSet, geometry: PlanarArrayGeometry,
               carrier: CarrierConfig) -> np.ndarray:
    diff = geometry.element_positions[:, None, :] - scatterers.positions[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)  # (N, S)
    if dist.min() < carrier.wavelength_m / 100:
        raise ValueError("scatterer coincides with an array element")
    return dist


def energy_scale(scatterers: ClusterScattererSet, geometry: PlanarArrayGeometry,
                 carrier: CarrierConfig, total_power: float | None = None) -> float:
    """Amplitude factor that makes the exact Green's channel have ``E||h||^2 = total_power``.

    The expectation is over the scatterer gains for fixed positions.
    """
    dist = _distances(scatterers, geometry, carrier)
    ref = (scatterers.gain_variance * (1.0 / (4 * math.pi * dist) ** 2).sum(axis=0)).sum()
    target = geometry.n_elements if total_power is None else total_power
    return math.sqrt(target / ref)


def synthesize_nearfield_greens(scatterers: ClusterScattererSet, geometry: PlanarArrayGeometry,
                                carrier: CarrierConfig, rng_seed=None, normalize: bool = True,
                                total_power: float | None = None) -> ChannelVector:
    """Exact spherical-wave channel ``sum_s b_s exp(-jk d_sn) / (4 pi d_sn)``."""
    dist = _distances(scatterers, geometry, carrier)
    h = (np.exp(-1j * carrier.k * dist) / (4 * math.pi * dist)) @ scatterers.gains
    if normalize:
        h = h * energy_scale(scatterers, geometry, carrier, total_power)
    return ChannelVector(h, Provenance.EXACT_GREENS, rng_seed)


def _far_terms(scatterers, geometry, carrier):
    _distances(scatterers, geometry, carrier)  # coincidence check
    r_s = np.linalg.norm(scatterers.positions, axis=1)
    d_hat = scatterers.positions / r_s[:, None]
    proj = geometry.element_positions @ d_hat.T  # (N, S) = d_hat^T r_n
    return r_s, proj


def fraunhofer_channel(scatterers: ClusterScattererSet, geometry: PlanarArrayGeometry,
                       carrier: CarrierConfig, normalize: bool = True,
                       total_power: float | None = None) -> ChannelVector:
    """Planar-wavefront approximation: first-order path length, amplitude frozen at ``1/(4 pi r_s)``.

    With ``normalize`` the exact channel's energy scale is applied, so the
    approximation is directly comparable with :func:`synthesize_nearfield_greens`.
    """
    r_s, proj = _far_terms(scatterers, geometry, carrier)
    h = (np.exp(-1j * carrier.k * (r_s[None, :] - proj)) / (4 * math.pi * r_s[None, :])) @ scatterers.gains
    if normalize:
        h = h * energy_scale(scatterers, geometry, carrier, total_power)
    return ChannelVector(h, Provenance.FRAUNHOFER)


def fresnel_channel(scatterers: ClusterScattererSet, geometry: PlanarArrayGeometry,
                    carrier: CarrierConfig, normalize: bool = True,
                    total_power: float | None = None) -> ChannelVector:
    """Parabolic-wavefront approximation.

    Path length to second order about the array centre,
    ``r_s - d.r + (|r|^2 - (d.r)^2) / (2 r_s)``; amplitude to first order,
    ``(1 + d.r / r_s) / (4 pi r_s)``.
    """
    r_s, proj = _far_terms(scatterers, geometry, carrier)
    rr = (geometry.element_positions ** 2).sum(axis=1)[:, None]
    rs = r_s[None, :]
    path = rs - proj + (rr - proj ** 2) / (2 * rs)
    amp = (1.0 + proj / rs) / (4 * math.pi * rs)
    h = (amp * np.exp(-1j * carrier.k * path)) @ scatterers.gains
    if normalize:
        h = h * energy_scale(scatterers, geometry, carrier, total_power)
    return ChannelVector(h, Provenance.FRESNEL)


def apply_impairment_matrices(coefficients, left, right) -> np.ndarray:
    """``left @ coefficients @ right^H``; no normalisation."""
    c = np.asarray(coefficients)
    left = np.asarray(left)
    right = np.asarray(right)
    if c.ndim != 2 or left.ndim != 2 or right.ndim != 2:
        raise ValueError("all operands must be matrices")
    if left.shape[1] != c.shape[0] or right.shape[1] != c.shape[1]:
        raise ValueError(f"non-conformable shapes {left.shape}, {c.shape}, {right.shape}")
    return left @ c @ right.conj().T
