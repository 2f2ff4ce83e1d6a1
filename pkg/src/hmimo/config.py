"""Experiment configuration: a YAML tree mapped onto nested dataclasses.

Unknown keys are rejected at every level. Overrides use dotted paths, e.g.
``geometry.n_x=64`` or ``estimation.snr_db=[0, 10, 20]``; the right-hand side
is parsed as a YAML scalar/flow value.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class CarrierSection:
    frequency_hz: float = 30e9


@dataclass
class GeometrySection:
    n_x: int = 32
    n_y: int = 32
    spacing_wavelengths: float = 0.25


@dataclass
class LatticeSection:
    evanescent_margin: int = 0
    near_field_margin: int = 2


@dataclass
class ClusterSection:
    elevation_deg: float = 0.0
    azimuth_deg: float = 0.0
    alpha_vmf: float = 300.0
    weight: float = 1.0


@dataclass
class VarianceEntry:
    l: int = 0
    m: int = 0
    variance: float = 1.0


def _four_clusters():
    return [ClusterSection(20, 30, 300, 1), ClusterSection(35, 120, 300, 1),
            ClusterSection(25, 210, 300, 1), ClusterSection(40, 300, 300, 1)]


@dataclass
class SpectrumSection:
    clusters: list[ClusterSection] = field(default_factory=_four_clusters)
    # explicit far-field variance map; replaces the VMF mapping when non-empty
    variance_map: list[VarianceEntry] = field(default_factory=list)
    far_distance_rayleigh: float = 100.0
    near_distance_rayleigh: float = 0.3
    scatterers_per_cluster: int = 20
    shell_fraction: float = 0.05


@dataclass
class OmpSection:
    threshold_scale: float = 1.1
    min_threshold: float = 1e-3
    max_atoms_fraction: float = 0.25


@dataclass
class MrfSection:
    beta: float = 0.2
    alpha_bias: float = -0.5
    damping: float = 0.5
    max_turbo_iterations: int = 30
    convergence_tol: float = 1e-4
    power_floor: float = 1e-3


@dataclass
class EstimationSection:
    compression_ratio: float = 0.25
    snr_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0, 40.0, 60.0])
    algorithms: list[str] = field(default_factory=lambda: ["omp", "mrf"])
    basis: str = "fh"
    omp: OmpSection = field(default_factory=OmpSection)
    mrf: MrfSection = field(default_factory=MrfSection)


def _one_cluster():
    return [ClusterSection(30, 45, 300, 1)]


@dataclass
class CodebookSection:
    clusters: list[ClusterSection] = field(default_factory=_one_cluster)
    distance_min_m: float = 0.5
    distance_max_m: float = 30.0
    distance_count: int = 12
    distances_m: list[float] = field(default_factory=list)  # explicit grid, wins if set
    csi_error_std: float = 0.3
    snr_db: float = 0.0
    codebooks: list[str] = field(default_factory=lambda: ["fh", "dft"])
    scatterers_per_cluster: int = 20
    shell_fraction: float = 0.05


@dataclass
class ExperimentConfig:
    carrier: CarrierSection = field(default_factory=CarrierSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    lattice: LatticeSection = field(default_factory=LatticeSection)
    spectrum: SpectrumSection = field(default_factory=SpectrumSection)
    estimation: EstimationSection = field(default_factory=EstimationSection)
    codebook: CodebookSection = field(default_factory=CodebookSection)
    trials: int = 100
    base_seed: int = 2024
    output_dir: str = "out"
    threads: int = 1

    def validate(self) -> "ExperimentConfig":
        _check(self.carrier.frequency_hz > 0, "carrier.frequency_hz must be > 0")
        g = self.geometry
        _check(g.n_x >= 1 and g.n_y >= 1, "geometry.n_x and n_y must be >= 1")
        _check(g.spacing_wavelengths > 0, "geometry.spacing_wavelengths must be > 0")
        _check(self.lattice.evanescent_margin >= 0 and self.lattice.near_field_margin >= 0,
               "lattice margins must be >= 0")
        s = self.spectrum
        _check(len(s.clusters) > 0 or len(s.variance_map) > 0,
               "spectrum needs clusters or a variance_map")
        for c in s.clusters + self.codebook.clusters:
            _check(0 <= c.elevation_deg < 90, "cluster elevation must be in [0, 90)")
            _check(c.alpha_vmf >= 0 and c.weight > 0, "cluster alpha_vmf >= 0 and weight > 0")
        for v in s.variance_map:
            _check(v.variance >= 0, "variance_map entries must be >= 0")
        _check(s.far_distance_rayleigh > 0 and s.near_distance_rayleigh > 0,
               "spectrum distances must be > 0")
        _check(s.scatterers_per_cluster >= 1, "scatterers_per_cluster must be >= 1")
        _check(0 <= s.shell_fraction < 1, "shell_fraction must be in [0, 1)")
        e = self.estimation
        _check(0 < e.compression_ratio <= 1, "estimation.compression_ratio must be in (0, 1]")
        _check(len(e.snr_db) > 0, "estimation.snr_db is empty")
        _check(all(not math.isnan(x) for x in e.snr_db), "estimation.snr_db has NaN")
        _check(set(e.algorithms) <= {"omp", "mrf", "bg"} and e.algorithms,
               "estimation.algorithms must be a non-empty subset of omp, mrf, bg")
        _check(e.basis in ("fh", "dft"), "estimation.basis must be fh or dft")
        _check(e.mrf.beta >= 0 and 0 <= e.mrf.damping < 1 and e.mrf.convergence_tol > 0,
               "invalid estimation.mrf parameters")
        _check(e.mrf.max_turbo_iterations >= 1, "estimation.mrf.max_turbo_iterations must be >= 1")
        _check(0 < e.omp.max_atoms_fraction <= 1, "estimation.omp.max_atoms_fraction in (0, 1]")
        cb = self.codebook
        _check(len(cb.clusters) > 0, "codebook.clusters is empty")
        _check(cb.csi_error_std >= 0, "codebook.csi_error_std must be >= 0")
        _check(set(cb.codebooks) <= {"fh", "dft"} and cb.codebooks,
               "codebook.codebooks must be a non-empty subset of fh, dft")
        if cb.distances_m:
            _check(all(d > 0 for d in cb.distances_m), "codebook.distances_m must be > 0")
        else:
            _check(0 < cb.distance_min_m <= cb.distance_max_m and cb.distance_count >= 1,
                   "invalid codebook distance grid")
        _check(cb.scatterers_per_cluster >= 1 and 0 <= cb.shell_fraction < 1,
               "invalid codebook scatterer settings")
        _check(self.trials >= 1, "trials must be >= 1")
        _check(self.threads >= 1, "threads must be >= 1")
        _check(0 <= self.base_seed < 2 ** 64, "base_seed must fit in 64 bits")
        return self

    def to_dict(self, include_runtime: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not include_runtime:
            d.pop("threads")
        return d


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _coerce(value, tp, path):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path or '<root>'}: expected a mapping")
        return _build(tp, value, path)
    if origin is list:
        (item,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return [_coerce(v, item, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, str):
            try:
                return float(value)  # YAML reads ".inf"/"1e9" forms inconsistently
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    raise ConfigError(f"{path}: unsupported type {tp}")


def _build(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = path or "<root>"
        raise ConfigError(f"unknown key(s) at {where}: {', '.join(map(str, unknown))}")
    kwargs = {k: _coerce(v, hints[k], f"{path}.{k}" if path else k) for k, v in data.items()}
    return cls(**kwargs)


def from_dict(data: dict | None) -> ExperimentConfig:
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    if "config" in data and "artifact_version" in data:
        data = data["config"]  # a JSON sidecar written by a previous run
    return _build(ExperimentConfig, data).validate()


def _set_path(tree: dict, dotted: str, value):
    keys = dotted.split(".")
    if not all(keys):
        raise ConfigError(f"bad override path {dotted!r}")
    node = tree
    for k in keys[:-1]:
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {dotted!r} descends into a non-mapping")
        node = nxt
    node[keys[-1]] = value


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    return key.strip(), value


def load_config(path: str | Path | None = None, overrides=()) -> ExperimentConfig:
    """Read a YAML (or JSON sidecar) file, apply ``key=value`` overrides, validate."""
    tree: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            tree = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(tree, dict):
            raise ConfigError("config root must be a mapping")
        if "config" in tree and "artifact_version" in tree:
            tree = tree["config"]
    # start from the full default tree so overrides can address any leaf
    merged = dataclasses.asdict(from_dict(tree))
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        _set_path(merged, key, value)
    return from_dict(merged)
