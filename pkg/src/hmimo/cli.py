"""Command-line entry point: ``hmimo <subcommand> [--config FILE] [--set key=value ...]``.

Subcommands write CSV files (each with a ``.json`` sidecar holding the
resolved config, seed and package version) into the output directory.
Exit codes: 0 success, 2 configuration error, 3 runtime error. Files written
by a failing run are removed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .bases import project
from .channel import synthesize_farfield
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import (Scenario, clusters_spectrum, codebook_sweep, far_variances,
                          leakage_experiment, leakage_trial, nmse_sweep, summarize_nmse)
from .rng import stream

log = logging.getLogger("hmimo")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Outputs:
    """Tracks files written by a run so they can be removed on failure."""

    def __init__(self, cfg: ExperimentConfig, subcommand: str):
        self.dir = Path(cfg.output_dir)
        self.cfg = cfg
        self.subcommand = subcommand
        self.written: list[Path] = []
        self.created_dir = False

    def prepare(self):
        if not self.dir.exists():
            self.dir.mkdir(parents=True)
            self.created_dir = True

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.written.append(p)
        return p

    def sidecar(self, p: Path):
        self.written.append(Path(str(p) + ".json"))
        io.write_sidecar(p, self.subcommand, self.cfg.to_dict(include_runtime=False),
                         self.cfg.base_seed)

    def cleanup(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        if self.created_dir:
            try:
                self.dir.rmdir()
            except OSError:
                pass


def _csv(out: _Outputs, name: str, columns, rows):
    p = out.path(name)
    io.write_rows(p, columns, rows)
    out.sidecar(p)
    return p


def cmd_lattice(cfg, out: _Outputs, threads: int):
    sc = Scenario.from_config(cfg)
    lat = sc.lattice
    rows = ({"l": int(pt.l), "m": int(pt.m), "kappa_x": pt.kappa_x, "kappa_y": pt.kappa_y,
             "gamma_re": pt.gamma.real, "gamma_im": pt.gamma.imag,
             "is_propagating": int(pt.is_propagating)} for pt in lat.points)
    _csv(out, "lattice.csv",
         ["l", "m", "kappa_x", "kappa_y", "gamma_re", "gamma_im", "is_propagating"], rows)
    log.info("lattice: %d points (%d propagating), Rayleigh distance %.4g m",
             len(lat), lat.propagating_count, sc.rayleigh_m)


def cmd_spectrum(cfg, out: _Outputs, threads: int):
    sc = Scenario.from_config(cfg)
    near_sc = Scenario.from_config(cfg, cfg.lattice.near_field_margin)
    s = cfg.spectrum
    seed = cfg.base_seed

    var = far_variances(cfg, sc)
    _csv(out, "variances.csv", ["l", "m", "kappa_x", "kappa_y", "variance"],
         ({"l": int(a), "m": int(b), "kappa_x": float(kx), "kappa_y": float(ky),
           "variance": float(v)}
          for a, b, kx, ky, v in zip(sc.lattice.l, sc.lattice.m, sc.lattice.kappa_x,
                                     sc.lattice.kappa_y, var.variances)))

    # far field heatmap: Fourier-series channel drawn from the analytic variances
    h = synthesize_farfield(var, sc.fh, stream(seed, "spectrum/far"))
    rows = []
    for basis in (sc.fh, sc.dft):
        rows.extend(io.spectrum_rows(basis, project(basis, h)))
    _csv(out, "spectrum_far.csv", io.SPECTRUM_COLUMNS, rows)

    # near field heatmap: Green's-function channel inside the Rayleigh distance
    spec = clusters_spectrum(s.clusters)
    _, res = leakage_trial(spec, sc, s.near_distance_rayleigh * sc.rayleigh_m, seed, 0,
                           s.scatterers_per_cluster, s.shell_fraction, near_sc.fh)
    rows = list(io.spectrum_rows(near_sc.fh, res["fh"])) + list(io.spectrum_rows(sc.dft, res["dft"]))
    _csv(out, "spectrum_near.csv", io.SPECTRUM_COLUMNS, rows)

    recs = leakage_experiment(cfg, threads=threads)
    _csv(out, "leakage.csv", ["trial", "regime", "basis_kind", "n95", "normalized"],
         ({"trial": r.trial, "regime": r.regime, "basis_kind": r.basis_kind, "n95": r.n95,
           "normalized": r.normalized} for r in recs))
    for regime in ("far", "near"):
        for kind in ("fh", "dft"):
            vals = [r.normalized for r in recs if r.regime == regime and r.basis_kind == kind]
            log.info("%s %s: median normalised n95 %.4f", regime, kind, float(np.median(vals)))


def cmd_estimate(cfg, out: _Outputs, threads: int):
    recs = nmse_sweep(cfg, threads=threads)
    _csv(out, "nmse.csv", ["snr_db", "algorithm", "basis_kind", "trial", "nmse_db"],
         ({"snr_db": r.snr_db, "algorithm": r.algorithm, "basis_kind": r.basis_kind,
           "trial": r.trial, "nmse_db": r.nmse_db} for r in recs))
    summary = summarize_nmse(recs)
    _csv(out, "nmse_summary.csv", ["snr_db", "algorithm", "basis_kind", "median_nmse_db",
                                   "q25_nmse_db", "q75_nmse_db", "trials"], summary)
    for row in summary:
        log.info("snr %5.1f dB %-4s median NMSE %.2f dB", row["snr_db"], row["algorithm"],
                 row["median_nmse_db"])


def cmd_codebook(cfg, out: _Outputs, threads: int):
    points = codebook_sweep(cfg, threads=threads)
    _csv(out, "codebook.csv",
         ["distance_m", "codebook_kind", "mean_rate", "std_rate", "invalid_beam_fraction"],
         ({"distance_m": p.distance_m, "codebook_kind": p.codebook_kind,
           "mean_rate": p.mean_rate, "std_rate": p.std_rate,
           "invalid_beam_fraction": p.invalid_beam_fraction} for p in points))
    rows = []
    for p in points:
        for t, (r, i, bad) in enumerate(zip(p.rates, p.selections, p.invalid)):
            rows.append({"distance_m": p.distance_m, "codebook_kind": p.codebook_kind, "trial": t,
                         "rate_bps_hz": float(r), "selected_codeword_index": int(i),
                         "is_propagating": int(not bad)})
    _csv(out, "codebook_trials.csv", ["distance_m", "codebook_kind", "trial", "rate_bps_hz",
                                      "selected_codeword_index", "is_propagating"], rows)
    for p in points:
        log.info("d = %7.3f m %-3s mean rate %.3f bps/Hz, invalid beams %.2f",
                 p.distance_m, p.codebook_kind, p.mean_rate, p.invalid_beam_fraction)


def cmd_validate(cfg, out: _Outputs, threads: int):
    from .validate import run_checks

    results = run_checks(cfg)
    _csv(out, "validate.csv", ["check", "passed", "detail"],
         ({"check": r.name, "passed": int(r.passed), "detail": r.detail} for r in results))
    for r in results:
        log.info("%s %s: %s", "PASS" if r.passed else "FAIL", r.name, r.detail)
    failed = [r.name for r in results if not r.passed]
    if failed:
        # the report is complete, so it stays on disk; only the exit code signals failure
        print(f"hmimo: {len(failed)} invariant check(s) failed: {', '.join(failed)}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {"lattice": cmd_lattice, "spectrum": cmd_spectrum, "estimate": cmd_estimate,
            "codebook": cmd_codebook, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hmimo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="YAML config file (or a JSON sidecar of a previous run)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted-path override, e.g. geometry.n_x=64 (repeatable)")
    ap.add_argument("--seed", type=int, help="base seed (overrides base_seed)")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--trials", type=int, help="Monte-Carlo trials (overrides trials)")
    ap.add_argument("--threads", type=int, help="worker threads for the trial pool")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def resolve_config(args) -> ExperimentConfig:
    overrides = list(args.overrides)
    for flag, key in ((args.seed, "base_seed"), (args.out, "output_dir"),
                      (args.trials, "trials"), (args.threads, "threads")):
        if flag is not None:
            overrides.append((key, flag))
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"hmimo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = _Outputs(cfg, args.subcommand)
    try:
        out.prepare()
        code = COMMANDS[args.subcommand](cfg, out, cfg.threads)
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        out.cleanup()
        print(f"hmimo: {args.subcommand} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
