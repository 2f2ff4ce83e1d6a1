"""File formats: channel binary/CSV, spectrum and sweep CSVs, JSON sidecars."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__

MAGIC = b"HMWC"
_HEADER = struct.Struct("<4sIII")  # magic, length, reserved, zero pad to 16 bytes


def _fmt(x) -> str:
    # repr round-trips doubles exactly and is stable across runs
    return repr(float(x))


def write_channel_binary(path, samples) -> None:
    """16-byte header (magic, u32 length, u32 reserved, u32 zero pad) then LE float64 re/im pairs."""
    h = np.ascontiguousarray(np.asarray(getattr(samples, "samples", samples), dtype=np.complex128))
    if h.ndim != 1:
        raise ValueError("channel must be one-dimensional")
    body = np.empty(2 * h.size, dtype="<f8")
    body[0::2] = h.real
    body[1::2] = h.imag
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, h.size, 0, 0))
        f.write(body.tobytes())


def read_channel_binary(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError("file too short for header")
    magic, n, _, _ = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != 16 * n:
        raise ValueError(f"payload holds {len(body)} bytes, header says {n} samples")
    v = np.frombuffer(body, dtype="<f8")
    return v[0::2] + 1j * v[1::2]


def write_channel_csv(path, samples) -> None:
    h = np.asarray(getattr(samples, "samples", samples), dtype=complex)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["index", "re", "im"])
        for i, z in enumerate(h):
            w.writerow([i, _fmt(z.real), _fmt(z.imag)])


def read_channel_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    out = np.zeros(len(rows), dtype=complex)
    for r in rows:
        out[int(r["index"])] = float(r["re"]) + 1j * float(r["im"])
    return out


SPECTRUM_COLUMNS = ["atom_kind", "l_or_p", "m_or_q", "kappa_x", "kappa_y", "is_propagating", "power"]


def spectrum_rows(basis, spectrum, extra: dict | None = None):
    extra = extra or {}
    for i in range(basis.n_atoms):
        row = {"atom_kind": basis.kind, "l_or_p": int(basis.index_a[i]),
               "m_or_q": int(basis.index_b[i]), "kappa_x": _fmt(basis.kappa_x[i]),
               "kappa_y": _fmt(basis.kappa_y[i]),
               "is_propagating": int(bool(basis.is_propagating[i])),
               "power": _fmt(spectrum.power[i])}
        row.update(extra)
        yield row


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (_fmt(v) if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})


def read_rows(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_spectrum_csv(path, basis, spectrum) -> None:
    write_rows(path, SPECTRUM_COLUMNS, spectrum_rows(basis, spectrum))


def write_sidecar(path, subcommand: str, config: dict, base_seed: int) -> Path:
    """JSON next to ``path`` (``<name>.json``) with the resolved config, seed and version."""
    side = Path(str(path) + ".json")
    doc = {"artifact_version": __version__, "subcommand": subcommand, "base_seed": base_seed,
           "output": Path(path).name, "config": config}
    side.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return side
