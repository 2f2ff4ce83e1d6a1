"""Invariant checks run by ``hmimo validate`` on the configured geometry.

Each check is cheap (a few seconds at desk scale) and independent of the
unit tests, so the suite can be pointed at any config.
"""

from __future__ import annotations

import itertools
import math
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bases import project
from .channel import (ClusterScattererSet, draw_fh_coefficients, fraunhofer_channel,
                      synthesize_farfield, synthesize_nearfield_greens)
from .codebook import Codebook, achievable_rate, select_beam
from .config import ExperimentConfig
from .em import build_lattice, direction_to_wavenumber, wavenumber_to_direction
from .estimation import MrfPrior, bg_estimate, build_measurement, mrf_estimate, omp_estimate
from .estimation import default_omp_stop
from .experiments import Scenario, far_variances
from .io import read_channel_binary, write_channel_binary
from .rng import complex_normal, stream


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _brute_lattice(sc: Scenario):
    lam = sc.carrier.wavelength_m
    ax, ay = sc.geometry.aperture_x_m / lam, sc.geometry.aperture_y_m / lam
    out = []
    for l in range(-int(ax) - 1, int(ax) + 2):
        for m in range(-int(ay) - 1, int(ay) + 2):
            if (l / ax) ** 2 + (m / ay) ** 2 <= 1 + 1e-9:
                out.append((l, m))
    return sorted(out)


def check_carrier(cfg, sc):
    c = sc.carrier
    err = abs(c.k * c.wavelength_m - 2 * math.pi) / (2 * math.pi)
    return err < 1e-12, f"relative error of k*lambda vs 2pi = {err:.2e}"


def check_lattice(cfg, sc):
    lat = build_lattice(sc.geometry, sc.carrier, 0)
    got = sorted(zip(lat.l.tolist(), lat.m.tolist()))
    ref = _brute_lattice(sc)
    ident = np.abs(lat.kappa_x ** 2 + lat.kappa_y ** 2 + lat.gamma ** 2 - sc.carrier.k ** 2)
    ok = got == ref and len(set(got)) == len(got) and ident.max() <= 1e-9 * sc.carrier.k ** 2
    return ok, f"{len(got)} points vs {len(ref)} by brute force"


def check_direction_roundtrip(cfg, sc):
    worst = 0.0
    for th_deg, ph_deg in itertools.product(np.linspace(0, 89, 12), np.linspace(-170, 170, 9)):
        th, ph = math.radians(th_deg), math.radians(ph_deg)
        kx, ky = direction_to_wavenumber(th, ph, sc.carrier)
        pt = type("P", (), {"kappa_x": float(kx), "kappa_y": float(ky)})
        t2, p2 = wavenumber_to_direction(pt, sc.carrier)
        worst = max(worst, abs(t2 - th), abs(p2 - ph) if th_deg > 0 else 0.0)
    return worst < 1e-9, f"max angle error {worst:.2e} rad"


def check_dft_unitary(cfg, sc):
    err = np.abs(sc.dft.gram() - np.eye(sc.dft.n_atoms)).max()
    return err <= 1e-12, f"max |G - I| = {err:.2e}"


def check_fh_orthonormal(cfg, sc):
    err = np.abs(sc.fh.gram() - np.eye(sc.fh.n_atoms)).max()
    return err <= 1e-10, f"max |G - I| = {err:.2e} over {sc.fh.n_atoms} atoms"


def check_parseval(cfg, sc):
    rng = stream(cfg.base_seed, "validate/parseval")
    worst = 0.0
    for _ in range(100):
        h = complex_normal(rng, sc.geometry.n_elements)
        c = sc.dft.atoms.conj().T @ h
        worst = max(worst, abs(np.vdot(c, c).real - np.vdot(h, h).real) / np.vdot(h, h).real)
    return worst <= 1e-12, f"max relative energy error {worst:.2e}"


def check_fh_span(cfg, sc):
    var = far_variances(cfg, sc)
    h = synthesize_farfield(var, sc.fh, stream(cfg.base_seed, "validate/span"))
    r = project(sc.fh, h).residual_energy_fraction
    return r <= 1e-20, f"residual energy fraction {r:.2e}"


def check_farfield_energy(cfg, sc):
    var = far_variances(cfg, sc)
    rng = stream(cfg.base_seed, "validate/energy")
    e = [np.linalg.norm(sc.fh.atoms @ draw_fh_coefficients(var, rng)) ** 2 for _ in range(1000)]
    rel = abs(np.mean(e) - var.total) / var.total
    return rel < 0.05, f"mean energy {np.mean(e):.1f} vs target {var.total:.1f}"


def check_determinism(cfg, sc):
    var = far_variances(cfg, sc)
    a = synthesize_farfield(var, sc.fh, stream(cfg.base_seed, "validate/det", 3)).samples
    b = synthesize_farfield(var, sc.fh, stream(cfg.base_seed, "validate/det", 3)).samples
    return a.tobytes() == b.tobytes(), "same seed gives bit-identical channels"


def check_fraunhofer_convergence(cfg, sc):
    grid = np.geomspace(0.05, 100, 10) * sc.rayleigh_m
    theta = math.radians(20)
    vals = []
    for d in grid:
        s = ClusterScattererSet.single(d * np.array([math.sin(theta), 0, math.cos(theta)]))
        ex = synthesize_nearfield_greens(s, sc.geometry, sc.carrier).samples
        fr = fraunhofer_channel(s, sc.geometry, sc.carrier).samples
        vals.append(np.linalg.norm(fr - ex) ** 2 / np.linalg.norm(ex) ** 2)
    inc = np.diff(vals)
    bad = inc[inc > 0]
    ok = bad.size == 0 or (bad.size == 1 and bad[0] < 1e-3)
    return ok, f"NMSE from {vals[0]:.3g} to {vals[-1]:.3g}, {bad.size} inversion(s)"


def check_omp(cfg, sc):
    var = far_variances(cfg, sc)
    ok = True
    for t in range(3):
        h = synthesize_farfield(var, sc.fh, stream(cfg.base_seed, "validate/omp", t))
        model = build_measurement(sc.geometry, sc.fh, cfg.estimation.compression_ratio, 20,
                                  stream(cfg.base_seed, "validate/omp-s", t))
        y = model.measure(h, stream(cfg.base_seed, "validate/omp-n", t))
        res = omp_estimate(y, model, default_omp_stop(y, model))
        ok &= bool(np.all(np.diff(res.trace) <= 1e-9 * res.trace[0]))
        ok &= int(res.support.sum()) == res.iterations
    return ok, "residual non-increasing and no atom picked twice"


def check_mrf_decoupling(cfg, sc):
    var = far_variances(cfg, sc)
    h = synthesize_farfield(var, sc.fh, stream(cfg.base_seed, "validate/mrf"))
    model = build_measurement(sc.geometry, sc.fh, cfg.estimation.compression_ratio, 10,
                              stream(cfg.base_seed, "validate/mrf-s"))
    y = model.measure(h, stream(cfg.base_seed, "validate/mrf-n"))
    prior = MrfPrior(sc.lattice.neighbor_edges(), beta=0.0,
                     alpha_bias=cfg.estimation.mrf.alpha_bias)
    a, b = mrf_estimate(y, model, prior), bg_estimate(y, model, prior)
    err = float(np.abs(a.support_probability - b.support_probability).max())
    return err <= 1e-9, f"max support-probability difference {err:.1e}"


def check_beam_selection(cfg, sc):
    rng = stream(cfg.base_seed, "validate/beam")
    book = Codebook.from_basis(sc.dft)
    ok = True
    for _ in range(5):
        h = complex_normal(rng, sc.geometry.n_elements)
        idx = select_beam(h, book)
        perm = rng.permutation(len(book))
        gains = np.abs(book.codewords[:, perm].conj().T @ h)
        best = perm[int(np.argmax(gains))]
        ok &= math.isclose(abs(np.vdot(book.codewords[:, idx], h)),
                           abs(np.vdot(book.codewords[:, best], h)), rel_tol=1e-12)
        w = book.codewords[:, idx]
        r0 = achievable_rate(h, w, 10.0)
        r1 = achievable_rate(h * np.exp(1j * rng.uniform(0, 2 * math.pi)), w, 10.0)
        ok &= math.isclose(r0, r1, rel_tol=1e-12)
    return ok, "argmax matches shuffled re-scan; rate invariant to global phase"


def check_binary_roundtrip(cfg, sc):
    h = complex_normal(stream(cfg.base_seed, "validate/io"), sc.geometry.n_elements)
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "h.bin"
        write_channel_binary(p, h)
        back = read_channel_binary(p)
        size = p.stat().st_size
    return bool(np.array_equal(back, h)) and size == 16 + 16 * h.size, f"{size} bytes"


CHECKS = [check_carrier, check_lattice, check_direction_roundtrip, check_dft_unitary,
          check_fh_orthonormal, check_parseval, check_fh_span, check_farfield_energy,
          check_determinism, check_fraunhofer_convergence, check_omp, check_mrf_decoupling,
          check_beam_selection, check_binary_roundtrip]


def run_checks(cfg: ExperimentConfig) -> list[CheckResult]:
    sc = Scenario.from_config(cfg)
    out = []
    for fn in CHECKS:
        name = fn.__name__.removeprefix("check_")
        try:
            ok, detail = fn(cfg, sc)
        except Exception as exc:  # noqa: BLE001 - a crashing check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
