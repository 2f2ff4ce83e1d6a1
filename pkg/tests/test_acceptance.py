"""Acceptance criteria, one test each.

Every test prints a single ``[ACCEPT n] PASS|FAIL ...`` line with the measured
numbers (visible with ``pytest -v -s`` and in the tee'd log), then asserts.
Tolerances and trial counts are the contract values; nothing here is tuned to
make a criterion pass.
"""

import math
import time

import numpy as np
import pytest

from hmimo.bases import build_dft_basis, build_fh_basis, project
from hmimo.channel import (AngularPowerSpectrum, Cluster, ClusterScattererSet, build_vmf_spectrum,
                           draw_scatterers, fraunhofer_channel, fresnel_channel,
                           synthesize_nearfield_greens)
from hmimo.cli import main
from hmimo.codebook import Codebook, coefficient_of_variation, distance_sweep
from hmimo.config import load_config
from hmimo.em import CarrierConfig, PlanarArrayGeometry, build_lattice, rayleigh_distance
from hmimo.estimation import nmse
from hmimo.experiments import codebook_sweep, leakage_experiment, median_curve, nmse_sweep
from hmimo.rng import complex_normal, stream

C = CarrierConfig(30e9)
REPORTED_RAYLEIGH_M = 26.85


@pytest.fixture
def report(capsys):
    def emit(n, ok, text):
        with capsys.disabled():
            print(f"\n[ACCEPT {n}] {'PASS' if ok else 'FAIL'} {text}")
    return emit


def brute_count(n, s):
    a = n * s
    return sum(1 for l in range(-n, n + 1) for m in range(-n, n + 1)
               if (l / a) ** 2 + (m / a) ** 2 <= 1 + 1e-12)


def test_1_lattice(report):
    t0 = time.perf_counter()
    got = []
    for n, s, want in [(4, 0.5, 13), (32, 0.25, 197)]:
        lat = build_lattice(PlanarArrayGeometry.from_wavelengths(n, n, s, C), C)
        got.append((lat.propagating_count, want, brute_count(n, s)))
    dt = time.perf_counter() - t0
    ok = all(a == b == c for a, b, c in got) and dt < 1.0
    report(1, ok, f"lattice counts (got, expected, brute force) = {got}, {dt:.3f} s (< 1 s)")
    assert ok


def test_2_basis_algebra(report):
    t0 = time.perf_counter()
    g32 = PlanarArrayGeometry.from_wavelengths(32, 32, 0.25, C)
    dft = build_dft_basis(g32, C)
    dft_err = np.abs(dft.gram() - np.eye(1024)).max()
    fh_err = {}
    # half-wavelength evaluated at odd n: for even n the rim harmonics l = +-n/2
    # alias onto the same samples (covered separately in the unit tests)
    for n, s in [(15, 0.5), (31, 0.5), (32, 0.25)]:
        g = PlanarArrayGeometry.from_wavelengths(n, n, s, C)
        gram = build_fh_basis(build_lattice(g, C), g).gram()
        fh_err[f"{n}x{n}@{s}"] = float(np.abs(gram - np.diag(np.diag(gram))).max())
    rng = stream(0, "accept/parseval")
    pars = 0.0
    for _ in range(100):
        h = complex_normal(rng, 1024)
        c = dft.atoms.conj().T @ h
        pars = max(pars, abs(np.vdot(c, c).real - np.vdot(h, h).real) / np.vdot(h, h).real)
    dt = time.perf_counter() - t0
    ok = dft_err <= 1e-12 and max(fh_err.values()) <= 1e-10 and pars <= 1e-12 and dt < 10
    report(2, ok, f"DFT |G-I| {dft_err:.1e} (<=1e-12); FH off-diag {fh_err} (<=1e-10); "
                  f"Parseval rel err {pars:.1e} (<=1e-12); {dt:.2f} s")
    assert ok


def test_3_power_leakage(report):
    t0 = time.perf_counter()
    cfg = load_config()  # four-cluster 32x32 lambda/4 scenario, far 100x / near 0.3x Rayleigh
    recs = leakage_experiment(cfg, trials=200)
    sel = lambda reg, kind, f: np.array([getattr(r, f) for r in recs  # noqa: E731
                                         if r.regime == reg and r.basis_kind == kind])
    far_fh, far_dft = sel("far", "fh", "n95"), sel("far", "dft", "n95")
    frac = float(np.mean(far_fh < far_dft))
    near_med = float(np.median(sel("near", "dft", "normalized")))
    far_med = float(np.median(sel("far", "dft", "normalized")))
    dt = time.perf_counter() - t0
    ok = frac >= 0.95 and near_med > far_med and dt < 120
    report(3, ok, f"n95(FH) < n95(DFT) in {frac:.1%} of 200 far trials (>=95%); median "
                  f"normalised DFT n95 near {near_med:.4f} > far {far_med:.4f}; {dt:.1f} s")
    assert ok


def test_4_approximation_hierarchy(report):
    t0 = time.perf_counter()
    g = PlanarArrayGeometry.from_wavelengths(32, 32, 0.25, C)
    r = rayleigh_distance(g, C)
    th = math.radians(20)
    d_hat = np.array([math.sin(th), 0.0, math.cos(th)])

    def errs(dist):
        s = ClusterScattererSet.single(dist * d_hat)
        ex = synthesize_nearfield_greens(s, g, C).samples
        return (nmse(fraunhofer_channel(s, g, C).samples, ex),
                nmse(fresnel_channel(s, g, C).samples, ex))

    fr_near, fs_near = errs(0.1 * r)
    fr_far, _ = errs(10 * r)
    grid = [errs(d)[0] for d in np.geomspace(0.05, 100, 10) * r]
    inc = np.diff(grid)
    mono = (inc > 0).sum() == 0 or ((inc > 0).sum() == 1 and inc.max() < 1e-3)
    dt = time.perf_counter() - t0
    ok = fs_near < fr_near and fr_far < 1e-2 and mono and dt < 30
    report(4, ok, f"0.1xR NMSE Fresnel {fs_near:.2e} < Fraunhofer {fr_near:.2e}; 10xR "
                  f"Fraunhofer {fr_far:.2e} (<1e-2); monotone grid {mono}; {dt:.2f} s")
    assert ok


def test_5_estimation_ordering(report):
    t0 = time.perf_counter()
    cfg = load_config(None, ["estimation.snr_db=[0, 5, 10, 15, 20, 40, 60]",
                             "estimation.algorithms=[omp, mrf]"])
    recs = nmse_sweep(cfg, trials=200)
    omp, mrf = median_curve(recs, "omp"), median_curve(recs, "mrf")
    grid = [0.0, 5.0, 10.0, 15.0, 20.0]
    order = all(mrf[s] <= omp[s] for s in grid)
    mono = all(np.all(np.diff([cur[s] for s in grid]) <= 0) for cur in (omp, mrf))
    plat = {k: abs(cur[40.0] - cur[60.0]) for k, cur in (("omp", omp), ("mrf", mrf))}
    dt = time.perf_counter() - t0
    ok = order and mono and max(plat.values()) < 1 and dt < 600
    fmt = lambda cur: ", ".join(f"{s:g}:{cur[s]:.2f}" for s in sorted(cur))  # noqa: E731
    report(5, ok, f"median NMSE dB OMP [{fmt(omp)}] MRF [{fmt(mrf)}]; MRF<=OMP on 0-20 dB "
                  f"{order}; monotone {mono}; plateau |40-60| {plat} (<1 dB); {dt:.0f} s")
    assert ok


def test_6_codebook_ordering(report):
    t0 = time.perf_counter()
    cfg = load_config()  # desk scale: 32x32 lambda/4, one cluster, 0.5-30 m, 12 points
    assert cfg.codebook.csi_error_std == 0.3 and cfg.trials == 100
    pts = codebook_sweep(cfg)
    fh = [p for p in pts if p.codebook_kind == "fh"]
    dft = [p for p in pts if p.codebook_kind == "dft"]
    mean_ok = all(a.mean_rate >= b.mean_rate for a, b in zip(fh, dft))
    med_ok = all(a.median_rate >= b.median_rate for a, b in zip(fh, dft))
    cv_fh = coefficient_of_variation([p.mean_rate for p in fh])
    cv_dft = coefficient_of_variation([p.mean_rate for p in dft])
    invalid = max(p.invalid_beam_fraction for p in dft)

    g = PlanarArrayGeometry.from_wavelengths(32, 32, 0.25, C)
    far = distance_sweep(AngularPowerSpectrum((Cluster.from_angles(30, 45, 300),)),
                         [100 * rayleigh_distance(g, C)],
                         [Codebook.from_basis(build_fh_basis(build_lattice(g, C), g)),
                          Codebook.from_basis(build_dft_basis(g, C))],
                         g, C, 10 ** (cfg.codebook.snr_db / 10), 0.0, 100, cfg.base_seed)
    gap = abs(far[0].mean_rate - far[1].mean_rate)
    dt = time.perf_counter() - t0
    ok = mean_ok and med_ok and cv_fh < cv_dft and gap < 0.1 and dt < 300
    report(6, ok, f"rate FH>=DFT at every distance: mean {mean_ok}, median {med_ok}; "
                  f"CV FH {cv_fh:.6f} < DFT {cv_dft:.6f}: {cv_fh < cv_dft}; max DFT invalid-beam "
                  f"fraction {invalid:.2f}; 100xR zero-CSI gap {gap:.4f} (<0.1); {dt:.1f} s")
    assert ok


def test_7_rayleigh(report):
    t0 = time.perf_counter()
    big = rayleigh_distance(PlanarArrayGeometry.from_wavelengths(129, 65, 0.25, C), C)
    desk = rayleigh_distance(PlanarArrayGeometry.from_wavelengths(32, 32, 0.25, C), C)
    hand = 256 * C.wavelength_m  # 2 (sqrt(2) 8 lambda)^2 / lambda
    rel = abs(big - REPORTED_RAYLEIGH_M) / REPORTED_RAYLEIGH_M
    dt = time.perf_counter() - t0
    ok = rel <= 0.06 and math.isclose(desk, hand, rel_tol=1e-12) and abs(desk - 2.56) < 0.01 \
        and dt < 1
    report(7, ok, f"129x65: {big:.3f} m vs reported {REPORTED_RAYLEIGH_M} m ({rel:.1%}, <=6%); "
                  f"32x32: {desk:.4f} m vs hand value {hand:.4f} m")
    assert ok


def test_8_far_field_oracle(report):
    t0 = time.perf_counter()
    g = PlanarArrayGeometry.from_wavelengths(32, 32, 0.25, C)
    lat = build_lattice(g, C)
    fh = build_fh_basis(lat, g)
    spec = AngularPowerSpectrum((Cluster.from_angles(30, 60, 50),))
    analytic = build_vmf_spectrum(spec, lat, C, g).variances
    dist = 100 * rayleigh_distance(g, C)
    acc = np.zeros(fh.n_atoms)
    for t in range(100):
        scat = draw_scatterers(spec, dist, stream(2024, "accept/oracle", t), per_cluster=200)
        acc += project(fh, synthesize_nearfield_greens(scat, g, C)).power
    corr = float(np.corrcoef(acc / 100, analytic)[0, 1])
    dt = time.perf_counter() - t0
    ok = corr > 0.9 and dt < 120
    report(8, ok, f"correlation of mean FH power spectrum (200 scatterers, 100 realisations) "
                  f"with analytic lattice variances {corr:.4f} (>0.9); {dt:.1f} s")
    assert ok


def test_9_determinism(report, tmp_path):
    t0 = time.perf_counter()
    runs = []
    for i, threads in enumerate((1, 1, 4)):
        out = tmp_path / f"run{i}"
        for sub in ("estimate", "codebook"):
            assert main([sub, "--out", str(out), "--threads", str(threads), "-q"]) == 0
        runs.append(out)
    names = ["nmse.csv", "nmse_summary.csv", "codebook.csv", "codebook_trials.csv"]
    same = {n: all((r / n).read_bytes() == (runs[0] / n).read_bytes() for r in runs[1:])
            for n in names}
    dt = time.perf_counter() - t0
    ok = all(same.values()) and dt < 900
    report(9, ok, f"byte-identical across 2 runs at 1 thread + 1 run at 4 threads: {same}; "
                  f"{dt:.0f} s")
    assert ok
