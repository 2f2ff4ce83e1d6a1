import csv
import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from hmimo import __version__
from hmimo.cli import main
from hmimo.config import ConfigError, ExperimentConfig, load_config
from hmimo.io import (read_channel_binary, read_channel_csv, read_rows, write_channel_binary,
                      write_channel_csv)
from hmimo.rng import complex_normal, stream

SMALL = ["--set", "geometry.n_x=12", "--set", "geometry.n_y=12",
         "--set", "estimation.snr_db=[0, 20]", "--set", "codebook.distance_count=3"]


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# --- binary / CSV formats ------------------------------------------------------

def test_binary_layout(tmp_path):
    h = np.array([1 + 2j, -0.5 + 0.25j, 3e-300 - 7j])
    p = tmp_path / "h.bin"
    write_channel_binary(p, h)
    raw = p.read_bytes()
    assert len(raw) == 16 + 3 * 16
    assert raw[:4] == b"HMWC"
    assert struct.unpack("<I", raw[4:8])[0] == 3
    assert struct.unpack("<6d", raw[16:]) == (1.0, 2.0, -0.5, 0.25, 3e-300, -7.0)
    assert np.array_equal(read_channel_binary(p), h)


def test_binary_rejects_corrupt(tmp_path):
    p = tmp_path / "h.bin"
    write_channel_binary(p, np.ones(4, complex))
    raw = p.read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        read_channel_binary(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_channel_binary(tmp_path / "short.bin")


def test_channel_csv_round_trip(tmp_path):
    h = complex_normal(stream(1, "csv"), 50)
    write_channel_csv(tmp_path / "h.csv", h)
    assert np.array_equal(read_channel_csv(tmp_path / "h.csv"), h)
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "index,re,im"


# --- config ------------------------------------------------------------------

def test_default_config_valid():
    cfg = load_config()
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.geometry.n_x == 32 and cfg.estimation.mrf.beta == 0.2
    assert len(cfg.spectrum.clusters) == 4


def test_config_yaml_and_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("geometry:\n  n_x: 8\n  n_y: 6\nestimation:\n  snr_db: [1, 2]\n")
    cfg = load_config(p, ["geometry.spacing_wavelengths=0.5", "codebook.csi_error_std=0"])
    assert (cfg.geometry.n_x, cfg.geometry.n_y, cfg.geometry.spacing_wavelengths) == (8, 6, 0.5)
    assert cfg.estimation.snr_db == [1.0, 2.0]
    assert cfg.codebook.csi_error_std == 0.0
    cfg = load_config(None, ["spectrum.clusters=[{elevation_deg: 10, azimuth_deg: 5}]"])
    assert cfg.spectrum.clusters[0].alpha_vmf == 300.0


@pytest.mark.parametrize("text", [
    "geometry:\n  nx: 8\n",                      # typo, nested
    "bogus: 1\n",                                # typo, root
    "spectrum:\n  clusters:\n    - {elevation_deg: 10, alpha: 3}\n",  # typo inside a list item
    "geometry:\n  n_x: eight\n",                 # wrong type
    "geometry:\n  n_x: 2.5\n",                   # float for int
    "estimation:\n  compression_ratio: 0\n",     # fails validation
    "- 1\n- 2\n",                                # not a mapping
])
def test_config_rejections(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_bad_overrides():
    for ov in ["geometry.nx=3", "geometry", "geometry.n_x.deep=3", "trials=[1"]:
        with pytest.raises(ConfigError):
            load_config(None, [ov])
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.yaml")


def test_sidecar_reloads(tmp_path):
    assert main(["lattice", "--out", str(tmp_path), "--seed", "77", "-q"] + SMALL[:4]) == 0
    doc = json.loads((tmp_path / "lattice.csv.json").read_text())
    assert doc["artifact_version"] == __version__ and doc["base_seed"] == 77
    assert "threads" not in doc["config"]
    cfg = load_config(tmp_path / "lattice.csv.json")
    assert cfg.base_seed == 77 and cfg.geometry.n_x == 12


# --- CLI -------------------------------------------------------------------------

def test_cli_lattice_13_rows(tmp_path):
    rc = main(["lattice", "--out", str(tmp_path), "-q", "--set", "geometry.n_x=4",
               "--set", "geometry.n_y=4", "--set", "geometry.spacing_wavelengths=0.5"])
    assert rc == 0
    assert len(rows(tmp_path / "lattice.csv")) == 13


def test_cli_spectrum_single_atom(tmp_path):
    rc = main(["spectrum", "--out", str(tmp_path), "--trials", "2", "-q",
               "--set", "spectrum.variance_map=[{l: 2, m: 1, variance: 1.0}]"])
    assert rc == 0
    far = rows(tmp_path / "spectrum_far.csv")
    assert list(far[0]) == ["atom_kind", "l_or_p", "m_or_q", "kappa_x", "kappa_y",
                            "is_propagating", "power"]
    hot = [r for r in far if r["atom_kind"] == "fh" and float(r["power"]) > 1e-10]
    assert [(r["l_or_p"], r["m_or_q"]) for r in hot] == [("2", "1")]
    for name in ("spectrum_near.csv", "leakage.csv", "variances.csv"):
        assert (tmp_path / name).exists() and (tmp_path / (name + ".json")).exists()


def test_cli_reproducible_across_threads(tmp_path):
    outs = []
    for i, threads in enumerate((1, 1, 3)):
        out = tmp_path / f"run{i}"
        for sub in ("estimate", "codebook"):
            rc = main([sub, "--out", str(out), "--trials", "4", "--threads", str(threads),
                       "--seed", "5", "-q"] + SMALL)
            assert rc == 0
        outs.append(out)
    for name in ("nmse.csv", "nmse_summary.csv", "codebook.csv", "codebook_trials.csv"):
        ref = (outs[0] / name).read_bytes()
        assert all((o / name).read_bytes() == ref for o in outs[1:])
    nm = rows(outs[0] / "nmse.csv")
    assert list(nm[0]) == ["snr_db", "algorithm", "basis_kind", "trial", "nmse_db"]
    assert len(nm) == 2 * 2 * 4
    cb = rows(outs[0] / "codebook.csv")
    assert list(cb[0]) == ["distance_m", "codebook_kind", "mean_rate", "std_rate",
                           "invalid_beam_fraction"]


def test_cli_sidecar_round_trip_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["codebook", "--out", str(a), "--trials", "3", "-q"] + SMALL) == 0
    assert main(["codebook", "--config", str(a / "codebook.csv.json"), "--out", str(b), "-q"]) == 0
    assert (a / "codebook.csv").read_bytes() == (b / "codebook.csv").read_bytes()


def test_cli_config_error_exit_code(tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["lattice", "--out", str(out), "--set", "geometry.nx=3"]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert not out.exists()
    assert main(["lattice", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_cli_runtime_error_removes_outputs(tmp_path):
    # even n at half-wavelength spacing makes the FH set rank deficient, so the
    # least-squares projection fails after variances.csv has been written
    out = tmp_path / "o"
    out.mkdir()
    (out / "keep.txt").write_text("unrelated")
    rc = main(["spectrum", "--out", str(out), "-q", "--set", "geometry.n_x=4",
               "--set", "geometry.n_y=4", "--set", "geometry.spacing_wavelengths=0.5"])
    assert rc == 3
    assert sorted(p.name for p in out.iterdir()) == ["keep.txt"]


def test_cli_validate(tmp_path):
    assert main(["validate", "--out", str(tmp_path), "-q"]) == 0
    res = read_rows(tmp_path / "validate.csv")
    assert res and all(r["passed"] == "1" for r in res)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hmimo", "lattice", "--out", str(tmp_path),
                           "-q"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(rows(tmp_path / "lattice.csv")) == 197
