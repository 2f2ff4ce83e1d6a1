"""Carrier and array geometry bookkeeping, and the wavenumber lattice.

The aperture of an ``n_x`` by ``n_y`` array with spacing ``d`` is taken as
``L = n * d`` (not ``(n - 1) * d``). This is the continuous-aperture view of a
holographic array, and it makes the harmonic frequencies ``2*pi*l/L`` land
exactly on the bins of an ``n``-point DFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# slack on the ellipse test so that points exactly on the rim (l^2 + m^2 = (L/lambda)^2)
# are not lost to rounding in L/lambda
_RIM_TOL = 1e-9


@dataclass(frozen=True)
class CarrierConfig:
    frequency_hz: float

    def __post_init__(self):
        if not self.frequency_hz > 0:
            raise ValueError("frequency_hz must be positive")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def wavenumber_rad_per_m(self) -> float:
        return 2.0 * math.pi / self.wavelength_m

    # short aliases used all over the numerics
    @property
    def wavelength(self) -> float:
        return self.wavelength_m

    @property
    def k(self) -> float:
        return self.wavenumber_rad_per_m


@dataclass(frozen=True)
class PlanarArrayGeometry:
    """Uniform planar array in the z = 0 plane, centred at the origin.

    Elements are ordered row-major with y as the outer index, so element
    ``j * n_x + i`` sits at ``((i - (n_x-1)/2) * d, (j - (n_y-1)/2) * d, 0)``.
    """

    n_x: int
    n_y: int
    spacing_m: float

    def __post_init__(self):
        if int(self.n_x) < 1 or int(self.n_y) < 1:
            raise ValueError("element counts must be positive integers")
        if not self.spacing_m > 0:
            raise ValueError("spacing_m must be positive")

    @classmethod
    def from_wavelengths(cls, n_x: int, n_y: int, spacing_wavelengths: float,
                         carrier: CarrierConfig) -> "PlanarArrayGeometry":
        return cls(n_x, n_y, spacing_wavelengths * carrier.wavelength_m)

    @property
    def n_elements(self) -> int:
        return self.n_x * self.n_y

    @property
    def aperture_x_m(self) -> float:
        return self.n_x * self.spacing_m

    @property
    def aperture_y_m(self) -> float:
        return self.n_y * self.spacing_m

    @cached_property
    def element_positions(self) -> np.ndarray:
        """(n_x*n_y, 3) array of element coordinates in metres."""
        xs = (np.arange(self.n_x) - (self.n_x - 1) / 2.0) * self.spacing_m
        ys = (np.arange(self.n_y) - (self.n_y - 1) / 2.0) * self.spacing_m
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        pos = np.zeros((self.n_elements, 3))
        pos[:, 0] = xx.ravel()
        pos[:, 1] = yy.ravel()
        pos.flags.writeable = False
        return pos


@dataclass(frozen=True)
class LatticePoint:
    l: int
    m: int
    kappa_x: float
    kappa_y: float
    gamma: complex
    is_propagating: bool


@dataclass(frozen=True)
class WavenumberLattice:
    """Integer-indexed spatial-frequency points of an aperture.

    Column-style arrays (``l``, ``m``, ``kappa_x`` ...) mirror ``points`` and
    are what the numerical code uses.
    """

    points: tuple
    evanescent_margin: int
    aperture_x_m: float
    aperture_y_m: float
    wavenumber: float
    l: np.ndarray = field(repr=False)
    m: np.ndarray = field(repr=False)
    kappa_x: np.ndarray = field(repr=False)
    kappa_y: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    is_propagating: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.points)

    @property
    def propagating_count(self) -> int:
        return int(self.is_propagating.sum())

    def index_of(self, l: int, m: int) -> int:
        """Position of point ``(l, m)`` in the lattice ordering."""
        hit = np.flatnonzero((self.l == l) & (self.m == m))
        if hit.size == 0:
            raise KeyError((l, m))
        return int(hit[0])

    def neighbor_edges(self) -> np.ndarray:
        """Undirected 4-neighbour edges as an (E, 2) array of point indices, i < j."""
        return grid_edges(self.l, self.m)


def grid_edges(index_a, index_b) -> np.ndarray:
    """4-neighbour edges between integer grid points (pairs differing by one in one index)."""
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(zip(index_a, index_b))}
    edges = []
    for i, (a, b) in enumerate(zip(index_a, index_b)):
        for nb in ((int(a) + 1, int(b)), (int(a), int(b) + 1)):
            j = lookup.get(nb)
            if j is not None:
                edges.append((min(i, j), max(i, j)))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def build_lattice(geometry: PlanarArrayGeometry, carrier: CarrierConfig,
                  evanescent_margin: int = 0) -> WavenumberLattice:
    """Enumerate the wavenumber lattice of ``geometry`` at ``carrier``.

    Propagating points satisfy ``(l*lam/Lx)**2 + (m*lam/Ly)**2 <= 1``. With a
    positive ``evanescent_margin`` the ellipse semi-axes are inflated by that
    many index units and the extra points are kept, flagged evanescent.
    Points come out sorted lexicographically by ``(l, m)``.
    """
    if evanescent_margin < 0 or int(evanescent_margin) != evanescent_margin:
        raise ValueError("evanescent_margin must be a non-negative integer")
    evanescent_margin = int(evanescent_margin)
    lx, ly = geometry.aperture_x_m, geometry.aperture_y_m
    if not (lx > 0 and ly > 0):
        raise ValueError("aperture must be positive")

    lam, k = carrier.wavelength_m, carrier.k
    ax, ay = lx / lam, ly / lam  # semi-axes of the propagating ellipse, index units
    bx, by = ax + evanescent_margin, ay + evanescent_margin
    ls = np.arange(-math.floor(bx + _RIM_TOL), math.floor(bx + _RIM_TOL) + 1)
    ms = np.arange(-math.floor(by + _RIM_TOL), math.floor(by + _RIM_TOL) + 1)
    ll, mm = np.meshgrid(ls, ms, indexing="ij")  # l outer -> lexicographic after ravel
    ll, mm = ll.ravel(), mm.ravel()

    prop = (ll / ax) ** 2 + (mm / ay) ** 2 <= 1.0 + _RIM_TOL
    if evanescent_margin > 0:
        keep = prop | ((ll / bx) ** 2 + (mm / by) ** 2 <= 1.0 + _RIM_TOL)
    else:
        keep = prop
    ll, mm, prop = ll[keep], mm[keep], prop[keep]

    kx = 2.0 * math.pi * ll / lx
    ky = 2.0 * math.pi * mm / ly
    g2 = k * k - kx * kx - ky * ky
    # rim points can land a hair outside k**2 numerically; clamp them to gamma = 0
    g2 = np.where(prop, np.maximum(g2, 0.0), np.minimum(g2, 0.0))
    gamma = np.where(g2 >= 0, np.sqrt(np.abs(g2)) + 0j, 1j * np.sqrt(np.abs(g2)))

    points = tuple(
        LatticePoint(int(a), int(b), float(cx), float(cy), complex(g), bool(p))
        for a, b, cx, cy, g, p in zip(ll, mm, kx, ky, gamma, prop)
    )
    arrays = dict(l=ll.astype(np.int64), m=mm.astype(np.int64), kappa_x=kx,
                  kappa_y=ky, gamma=gamma, is_propagating=prop)
    for arr in arrays.values():
        arr.flags.writeable = False
    return WavenumberLattice(points=points, evanescent_margin=evanescent_margin,
                             aperture_x_m=lx, aperture_y_m=ly, wavenumber=k, **arrays)


def rayleigh_distance(geometry: PlanarArrayGeometry, carrier: CarrierConfig) -> float:
    """``2 D**2 / lambda`` with ``D`` the aperture diagonal (aperture = n * spacing)."""
    d2 = geometry.aperture_x_m ** 2 + geometry.aperture_y_m ** 2
    return 2.0 * d2 / carrier.wavelength_m


def wavenumber_to_direction(point, carrier: CarrierConfig):
    """Map a lattice point to ``(elevation, azimuth)`` in radians.

    Returns ``None`` for evanescent points, which have no physical angle.
    ``point`` can be a :class:`LatticePoint` or any object with ``kappa_x``
    and ``kappa_y`` attributes.
    """
    k = carrier.k
    kt2 = point.kappa_x ** 2 + point.kappa_y ** 2
    if kt2 > k * k * (1.0 + 1e-12):
        return None
    theta = math.asin(min(1.0, math.sqrt(kt2) / k))
    phi = math.atan2(point.kappa_y, point.kappa_x)
    return theta, phi


def direction_to_wavenumber(theta, phi, carrier: CarrierConfig):
    """Transverse wavenumbers ``(kappa_x, kappa_y)`` of a plane wave from ``(theta, phi)``."""
    k = carrier.k
    return k * np.sin(theta) * np.cos(phi), k * np.sin(theta) * np.sin(phi)


def unit_vector(theta, phi) -> np.ndarray:
    """Cartesian unit vector(s) for elevation ``theta`` (from +z) and azimuth ``phi``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi),
                     np.cos(theta)], axis=-1)
