"""Dictionaries used as beam codebooks, and rate-versus-distance sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bases import Basis
from .channel import AngularPowerSpectrum, draw_scatterers, synthesize_nearfield_greens
from .rng import as_generator, complex_normal, stream


@dataclass(frozen=True)
class Codebook:
    codewords: np.ndarray = field(repr=False)
    kind: str
    is_propagating: np.ndarray = field(repr=False)

    @classmethod
    def from_basis(cls, basis: Basis) -> "Codebook":
        return cls(basis.atoms, basis.kind, basis.is_propagating)

    def __len__(self):
        return self.codewords.shape[1]


@dataclass(frozen=True)
class RatePoint:
    distance_m: float
    rate_bps_hz: float
    selected_codeword_index: int
    codebook_kind: str


def select_beam(h, codebook: Codebook, csi_error_std: float = 0.0, rng_seed=None) -> int:
    """Index of the codeword best matched to a noisy copy of ``h``.

    The noise is circular Gaussian with per-entry standard deviation
    ``csi_error_std * ||h|| / sqrt(N)``. Ties go to the lowest index.
    """
    h = np.asarray(getattr(h, "samples", h), dtype=complex)
    if len(codebook) == 0:
        raise ValueError("empty codebook")
    if codebook.codewords.shape[0] != h.size:
        raise ValueError("codebook and channel dimensions differ")
    if csi_error_std > 0:
        std = csi_error_std * np.linalg.norm(h) / math.sqrt(h.size)
        h = h + complex_normal(as_generator(rng_seed), h.size, std ** 2)
    gains = np.abs(codebook.codewords.conj().T @ h)
    return int(np.argmax(gains))  # argmax returns the first maximum


def achievable_rate(h, codeword, snr_linear: float) -> float:
    """``log2(1 + snr |h^H w|^2)`` for a unit-norm codeword."""
    h = np.asarray(getattr(h, "samples", h))
    g = abs(np.vdot(h, codeword)) ** 2
    return math.log2(1.0 + snr_linear * g)


@dataclass(frozen=True)
class SweepPoint:
    distance_m: float
    codebook_kind: str
    rates: np.ndarray = field(repr=False)
    selections: np.ndarray = field(repr=False)
    invalid: np.ndarray = field(repr=False)

    @property
    def mean_rate(self) -> float:
        return float(self.rates.mean())

    @property
    def median_rate(self) -> float:
        return float(np.median(self.rates))

    @property
    def std_rate(self) -> float:
        return float(self.rates.std())

    @property
    def invalid_beam_fraction(self) -> float:
        return float(self.invalid.mean())

    def rate_points(self):
        return [RatePoint(self.distance_m, float(r), int(s), self.codebook_kind)
                for r, s in zip(self.rates, self.selections)]


def _trial(spectrum, geometry, carrier, codebooks, distance, di, t, snr_linear,
           csi_error_std, base_seed, per_cluster, shell_fraction):
    scat = draw_scatterers(spectrum, distance, stream(base_seed, "codebook/scatterers", di, t),
                           per_cluster=per_cluster, shell_fraction=shell_fraction)
    h = synthesize_nearfield_greens(scat, geometry, carrier).samples
    out = []
    for cb in codebooks:
        # same CSI error realisation for every codebook (common random numbers)
        idx = select_beam(h, cb, csi_error_std, stream(base_seed, "codebook/csi", di, t))
        out.append((achievable_rate(h, cb.codewords[:, idx], snr_linear), idx,
                    not cb.is_propagating[idx]))
    return out


def distance_sweep(spectrum: AngularPowerSpectrum, distances, codebooks, geometry, carrier,
                   snr_linear: float, csi_error_std: float, trials: int, base_seed: int,
                   per_cluster: int = 20, shell_fraction: float = 0.05, threads: int = 1):
    """Rate of each codebook over a distance grid.

    For every distance and trial a fresh exact Green's-function channel is
    drawn with scatterers around that distance, a beam is picked per codebook
    from the same noisy CSI, and its rate on the true channel is recorded.
    Returns one :class:`SweepPoint` per ``(distance, codebook)`` in grid order.
    """
    distances = [float(d) for d in distances]
    if any(not d > 0 for d in distances):
        raise ValueError("distances must be positive")
    jobs = [(di, t) for di in range(len(distances)) for t in range(trials)]

    def run(job):
        di, t = job
        return _trial(spectrum, geometry, carrier, codebooks, distances[di], di, t, snr_linear,
                      csi_error_std, base_seed, per_cluster, shell_fraction)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    points = []
    for di, d in enumerate(distances):
        block = results[di * trials:(di + 1) * trials]
        for ci, cb in enumerate(codebooks):
            rates = np.array([r[ci][0] for r in block])
            sel = np.array([r[ci][1] for r in block], dtype=np.int64)
            inv = np.array([r[ci][2] for r in block], dtype=bool)
            points.append(SweepPoint(d, cb.kind, rates, sel, inv))
    return points


def coefficient_of_variation(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.std() / v.mean())
