"""Monte-Carlo experiments behind the CLI subcommands.

Every random draw uses ``rng.stream(base_seed, purpose, *counters)`` with the
trial index (and SNR/distance index) as counters, so a record depends only on
``(config, seed)`` and never on how trials are spread over worker threads.
BLAS is pinned to one thread while experiments run; multi-threaded BLAS
kernels are free to change summation order, which would break bit-level
reproducibility across ``--threads`` settings.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .bases import Basis, build_dft_basis, build_fh_basis, leakage_n95, project
from .channel import (AngularPowerSpectrum, Cluster, LatticeVariances, build_vmf_spectrum,
                      draw_scatterers, synthesize_farfield, synthesize_nearfield_greens)
from .codebook import Codebook, distance_sweep
from .config import ExperimentConfig
from .em import (CarrierConfig, PlanarArrayGeometry, WavenumberLattice, build_lattice,
                 grid_edges, rayleigh_distance)
from .estimation import (MrfPrior, OmpStop, bg_estimate, build_measurement, mrf_estimate,
                         nmse_db, omp_estimate)
from .rng import stream


def map_ordered(fn, jobs, threads: int = 1):
    """``[fn(j) for j in jobs]``, optionally on a thread pool; order preserved."""
    jobs = list(jobs)
    with threadpool_limits(limits=1, user_api="blas"):
        if threads <= 1 or len(jobs) <= 1:
            return [fn(j) for j in jobs]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))


@dataclass(frozen=True)
class Scenario:
    carrier: CarrierConfig
    geometry: PlanarArrayGeometry
    lattice: WavenumberLattice
    fh: Basis
    dft: Basis
    rayleigh_m: float

    @classmethod
    def from_config(cls, cfg: ExperimentConfig, margin: int | None = None) -> "Scenario":
        carrier = CarrierConfig(cfg.carrier.frequency_hz)
        g = cfg.geometry
        geom = PlanarArrayGeometry.from_wavelengths(g.n_x, g.n_y, g.spacing_wavelengths, carrier)
        m = cfg.lattice.evanescent_margin if margin is None else margin
        lat = build_lattice(geom, carrier, m)
        return cls(carrier, geom, lat, build_fh_basis(lat, geom), build_dft_basis(geom, carrier),
                   rayleigh_distance(geom, carrier))


def clusters_spectrum(sections) -> AngularPowerSpectrum:
    return AngularPowerSpectrum(tuple(
        Cluster.from_angles(c.elevation_deg, c.azimuth_deg, c.alpha_vmf, c.weight)
        for c in sections))


def far_variances(cfg: ExperimentConfig, sc: Scenario) -> LatticeVariances:
    """Analytic lattice variances: explicit map if configured, else the VMF mixture."""
    if cfg.spectrum.variance_map:
        entries = {(v.l, v.m): v.variance for v in cfg.spectrum.variance_map}
        try:
            return LatticeVariances.from_map(sc.lattice, entries)
        except KeyError as exc:
            raise ValueError(f"variance_map entry {exc} is not a lattice point") from None
    return build_vmf_spectrum(clusters_spectrum(cfg.spectrum.clusters), sc.lattice,
                              sc.carrier, sc.geometry)


# ---------------------------------------------------------------------------
# power leakage

@dataclass(frozen=True)
class LeakageRecord:
    trial: int
    regime: str
    basis_kind: str
    n95: int
    normalized: float


def leakage_trial(spectrum, sc: Scenario, distance_m, base_seed, trial, per_cluster=20,
                  shell_fraction=0.05, near_basis: Basis | None = None):
    """Green's-function channel at ``distance_m``; returns ``(h, {kind: SpectrumResult})``."""
    scat = draw_scatterers(spectrum, distance_m, stream(base_seed, "leakage/scatterers", trial),
                           per_cluster=per_cluster, shell_fraction=shell_fraction)
    h = synthesize_nearfield_greens(scat, sc.geometry, sc.carrier)
    fh = sc.fh if near_basis is None else near_basis
    return h, {"fh": project(fh, h), "dft": project(sc.dft, h)}


def leakage_experiment(cfg: ExperimentConfig, trials: int | None = None, threads: int = 1):
    """n95 of FH and DFT spectra for far (Green's) and near channels over ``trials``.

    Both regimes reuse the trial's scatterer stream, so near and far channels
    share their random directions and differ only in distance.
    """
    trials = cfg.trials if trials is None else trials
    sc = Scenario.from_config(cfg)
    near_sc = Scenario.from_config(cfg, cfg.lattice.near_field_margin)
    spec = clusters_spectrum(cfg.spectrum.clusters)
    s = cfg.spectrum
    regimes = [("far", s.far_distance_rayleigh * sc.rayleigh_m, sc.fh),
               ("near", s.near_distance_rayleigh * sc.rayleigh_m, near_sc.fh)]

    def run(t):
        recs = []
        for name, dist, fh in regimes:
            _, res = leakage_trial(spec, sc, dist, cfg.base_seed, t, s.scatterers_per_cluster,
                                   s.shell_fraction, fh)
            for kind in ("fh", "dft"):
                lk = leakage_n95(res[kind])
                recs.append(LeakageRecord(t, name, kind, lk.n95, lk.normalized))
        return recs

    return [r for block in map_ordered(run, range(trials), threads) for r in block]


# ---------------------------------------------------------------------------
# NMSE sweep

@dataclass(frozen=True)
class NmseRecord:
    snr_db: float
    algorithm: str
    basis_kind: str
    trial: int
    nmse_db: float


def mrf_prior(cfg: ExperimentConfig, basis: Basis) -> MrfPrior:
    p = cfg.estimation.mrf
    return MrfPrior(grid_edges(basis.index_a, basis.index_b), beta=p.beta,
                    alpha_bias=p.alpha_bias, max_turbo_iterations=p.max_turbo_iterations,
                    damping=p.damping, convergence_tol=p.convergence_tol,
                    power_floor=p.power_floor)


def omp_stop(cfg: ExperimentConfig, y, model) -> OmpStop:
    o = cfg.estimation.omp
    m = model.n_measurements
    ey = float(np.vdot(y, y).real)
    thr = o.threshold_scale * m * model.noise_variance / ey if ey > 0 else 0.0
    return OmpStop(max(thr, o.min_threshold), max(1, int(o.max_atoms_fraction * m)))


def estimation_trial(cfg: ExperimentConfig, sc: Scenario, variances, basis, prior, trial):
    e = cfg.estimation
    seed = cfg.base_seed
    h = synthesize_farfield(variances, sc.fh, stream(seed, "estimate/channel", trial)).samples
    recs = []
    for si, snr in enumerate(e.snr_db):
        model = build_measurement(sc.geometry, basis, e.compression_ratio, snr,
                                  stream(seed, "estimate/sensing", trial))
        y = model.measure(h, stream(seed, "estimate/noise", si, trial))
        for alg in e.algorithms:
            if alg == "omp":
                res = omp_estimate(y, model, omp_stop(cfg, y, model))
            elif alg == "mrf":
                res = mrf_estimate(y, model, prior)
            else:
                res = bg_estimate(y, model, prior)
            recs.append(NmseRecord(float(snr), alg, basis.kind, trial,
                                   nmse_db(res.channel(basis), h)))
    return recs


def nmse_sweep(cfg: ExperimentConfig, trials: int | None = None, threads: int = 1):
    """NMSE records for every (snr, algorithm, trial), sorted in that order.

    The ground truth is a Fourier-series channel drawn from the analytic
    lattice variances; each trial keeps its channel and sensing matrix fixed
    across the SNR grid.
    """
    trials = cfg.trials if trials is None else trials
    sc = Scenario.from_config(cfg)
    variances = far_variances(cfg, sc)
    basis = sc.fh if cfg.estimation.basis == "fh" else sc.dft
    prior = mrf_prior(cfg, basis)
    blocks = map_ordered(lambda t: estimation_trial(cfg, sc, variances, basis, prior, t),
                         range(trials), threads)
    order = {(s, a): i for i, (s, a) in enumerate(
        (float(s), a) for s in cfg.estimation.snr_db for a in cfg.estimation.algorithms)}
    recs = [r for b in blocks for r in b]
    recs.sort(key=lambda r: (order[(r.snr_db, r.algorithm)], r.trial))
    return recs


def summarize_nmse(records):
    """Median and quartiles of NMSE (dB) per (snr, algorithm, basis)."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.snr_db, r.algorithm, r.basis_kind), []).append(r.nmse_db)
    rows = []
    for (snr, alg, kind), vals in groups.items():
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        rows.append({"snr_db": snr, "algorithm": alg, "basis_kind": kind,
                     "median_nmse_db": float(med), "q25_nmse_db": float(q1),
                     "q75_nmse_db": float(q3), "trials": len(vals)})
    return rows


def median_curve(records, algorithm: str) -> dict:
    """``{snr_db: median nmse_db}`` for one algorithm."""
    return {r["snr_db"]: r["median_nmse_db"] for r in summarize_nmse(records)
            if r["algorithm"] == algorithm}


# ---------------------------------------------------------------------------
# codebook sweep

def codebook_distances(cfg: ExperimentConfig) -> list[float]:
    cb = cfg.codebook
    if cb.distances_m:
        return [float(d) for d in cb.distances_m]
    return [float(d) for d in np.geomspace(cb.distance_min_m, cb.distance_max_m, cb.distance_count)]


def codebook_sweep(cfg: ExperimentConfig, trials: int | None = None, threads: int = 1):
    trials = cfg.trials if trials is None else trials
    sc = Scenario.from_config(cfg)
    cb = cfg.codebook
    books = [Codebook.from_basis(sc.fh if k == "fh" else sc.dft) for k in cb.codebooks]
    with threadpool_limits(limits=1, user_api="blas"):
        return distance_sweep(clusters_spectrum(cb.clusters), codebook_distances(cfg), books,
                              sc.geometry, sc.carrier, 10 ** (cb.snr_db / 10), cb.csi_error_std,
                              trials, cfg.base_seed, cb.scatterers_per_cluster,
                              cb.shell_fraction, threads)
