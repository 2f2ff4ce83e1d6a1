"""DFT and Fourier-harmonic (FH) dictionaries, projections and leakage metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .em import CarrierConfig, PlanarArrayGeometry, WavenumberLattice

N95_FRACTION = 0.95


@dataclass(frozen=True)
class Basis:
    """Atom dictionary; one unit-norm column per atom.

    ``index_a``/``index_b`` hold ``(l, m)`` for FH atoms and the centred DFT
    bin ``(p, q)`` for DFT atoms. ``theta``/``phi`` are NaN for atoms without
    a physical direction.
    """

    kind: str
    atoms: np.ndarray = field(repr=False)
    index_a: np.ndarray = field(repr=False)
    index_b: np.ndarray = field(repr=False)
    kappa_x: np.ndarray = field(repr=False)
    kappa_y: np.ndarray = field(repr=False)
    is_propagating: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_elements(self) -> int:
        return self.atoms.shape[0]

    def gram(self) -> np.ndarray:
        return self.atoms.conj().T @ self.atoms

    def restrict(self, mask) -> "Basis":
        """Sub-dictionary made of the atoms selected by a boolean mask."""
        mask = np.asarray(mask, dtype=bool)
        return Basis(self.kind, self.atoms[:, mask], self.index_a[mask],
                     self.index_b[mask], self.kappa_x[mask], self.kappa_y[mask],
                     self.is_propagating[mask], self.theta[mask], self.phi[mask])


def plane_wave_atoms(kappa_x, kappa_y, geometry: PlanarArrayGeometry) -> np.ndarray:
    """Columns ``exp(j(kx x + ky y)) / sqrt(N)`` sampled at the element positions."""
    pos = geometry.element_positions
    phase = np.outer(pos[:, 0], kappa_x) + np.outer(pos[:, 1], kappa_y)
    return np.exp(1j * phase) / math.sqrt(geometry.n_elements)


def _directions(kx, ky, k, propagating):
    kt = np.hypot(kx, ky)
    theta = np.where(propagating, np.arcsin(np.clip(kt / k, 0.0, 1.0)), np.nan)
    phi = np.where(propagating, np.arctan2(ky, kx), np.nan)
    return theta, phi


def _frozen(*arrays):
    for a in arrays:
        a.flags.writeable = False


def build_dft_basis(geometry: PlanarArrayGeometry, carrier: CarrierConfig) -> Basis:
    """2-D DFT dictionary with centred bins ``p in [-n_x/2, n_x/2)``.

    Atoms are ordered with ``p`` outer and ``q`` inner. Phases are referenced to
    the array centre, so each column equals the textbook DFT column up to a
    constant unit-modulus factor.
    """
    p = np.arange(geometry.n_x) - geometry.n_x // 2
    q = np.arange(geometry.n_y) - geometry.n_y // 2
    pp, qq = (a.ravel() for a in np.meshgrid(p, q, indexing="ij"))
    kx = 2.0 * math.pi * pp / geometry.aperture_x_m
    ky = 2.0 * math.pi * qq / geometry.aperture_y_m
    k = carrier.k
    prop = kx ** 2 + ky ** 2 <= k * k * (1.0 + 1e-9)
    theta, phi = _directions(kx, ky, k, prop)
    atoms = plane_wave_atoms(kx, ky, geometry)
    _frozen(atoms, pp, qq, kx, ky, prop, theta, phi)
    return Basis("dft", atoms, pp, qq, kx, ky, prop, theta, phi)


def build_fh_basis(lattice: WavenumberLattice, geometry: PlanarArrayGeometry) -> Basis:
    """One FH atom per lattice point, in lattice order.

    Evanescent ring points (``evanescent_margin > 0``) get atoms of the same
    form at their beyond-``k`` spatial frequency and are flagged
    non-propagating.
    """
    if not (math.isclose(lattice.aperture_x_m, geometry.aperture_x_m, rel_tol=1e-12)
            and math.isclose(lattice.aperture_y_m, geometry.aperture_y_m, rel_tol=1e-12)):
        raise ValueError("lattice was built for a different aperture")
    kx = np.array(lattice.kappa_x)
    ky = np.array(lattice.kappa_y)
    prop = np.array(lattice.is_propagating)
    theta, phi = _directions(kx, ky, lattice.wavenumber, prop)
    atoms = plane_wave_atoms(kx, ky, geometry)
    la, ma = np.array(lattice.l), np.array(lattice.m)
    _frozen(atoms, la, ma, kx, ky, prop, theta, phi)
    return Basis("fh", atoms, la, ma, kx, ky, prop, theta, phi)


@dataclass(frozen=True)
class SpectrumResult:
    coefficients: np.ndarray
    power: np.ndarray
    n95: int
    residual_energy_fraction: float


def n95_count(power) -> int:
    """Smallest number of largest entries holding 95 % of the total power."""
    power = np.asarray(power, dtype=float)
    total = power.sum()
    if not total > 0:
        raise ValueError("spectrum has zero energy")
    csum = np.cumsum(np.sort(power)[::-1])
    # relative slack so that exactly-95 % cases are not pushed up by rounding
    return int(np.searchsorted(csum, N95_FRACTION * total * (1 - 1e-12)) + 1)


def project(basis: Basis, channel, mode: str | None = None) -> SpectrumResult:
    """Project ``channel`` onto ``basis``.

    ``mode`` is ``"adjoint"`` (``B^H h``) or ``"least_squares"``
    (minimum-norm ``argmin ||h - B c||``). The default is least squares for FH
    and adjoint for DFT.
    """
    h = np.asarray(getattr(channel, "samples", channel), dtype=complex)
    if h.shape != (basis.n_elements,):
        raise ValueError(f"channel length {h.shape} does not match basis rows {basis.n_elements}")
    if mode is None:
        mode = "least_squares" if basis.kind == "fh" else "adjoint"
    if mode == "adjoint":
        c = basis.atoms.conj().T @ h
    elif mode == "least_squares":
        c, _, rank, _ = np.linalg.lstsq(basis.atoms, h, rcond=None)
        if rank < basis.n_atoms:
            raise np.linalg.LinAlgError(
                f"basis is rank deficient ({rank} < {basis.n_atoms} atoms)")
    else:
        raise ValueError(f"unknown projection mode {mode!r}")

    power = np.abs(c) ** 2
    energy = np.vdot(h, h).real
    resid = h - basis.atoms @ c
    frac = float(np.vdot(resid, resid).real / energy) if energy > 0 else 0.0
    n95 = n95_count(power) if power.sum() > 0 else 0
    return SpectrumResult(c, power, n95, min(max(frac, 0.0), 1.0))


class Leakage(NamedTuple):
    n95: int
    normalized: float


def leakage_n95(spectrum: SpectrumResult) -> Leakage:
    n = n95_count(spectrum.power)
    return Leakage(n, n / spectrum.power.size)


def dirichlet_probe(geometry: PlanarArrayGeometry, carrier: CarrierConfig,
                    probe_frequency, atom_frequency):
    """``|sin(N u/2) / (N sin(u/2))|`` with ``u = (probe - atom) * spacing``.

    Magnitude of the normalised inner product between a plane wave of
    transverse wavenumber ``probe_frequency`` and an atom at
    ``atom_frequency``, along the x axis of the array (``n_x`` samples).
    ``carrier`` is accepted for signature symmetry; the kernel only depends on
    the sampling.
    """
    n = geometry.n_x
    u = (np.asarray(probe_frequency, dtype=float) - np.asarray(atom_frequency, dtype=float))
    u = u * geometry.spacing_m
    half = np.sin(u / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.abs(np.sin(n * u / 2.0) / (n * half))
    val = np.where(np.abs(half) < 1e-12, 1.0, val)
    return float(val) if np.ndim(val) == 0 else val
