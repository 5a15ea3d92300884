"""Flat ``key = value`` pipeline configuration.

Lines starting with ``#`` are comments. Relative paths resolve against the
directory holding the config file. Recognised keys::

    input.nodes  input.edges  input.ndvi  input.dem  input.corine
    input.population  input.green  input.stops          (required)
    input.urbanization  input.admin  input.moran_units  (optional)
    grid.origin_x  grid.origin_y  grid.n_rows  grid.n_cols  grid.cell_size
    decay.sigma_m            default 637.5
    iso.budget_s             default 900
    iso.speed_mps            default 5.1 km/h in m/s
    iso.snap_radius_m        default 100
    index.weights.<KIND>     defaults 0.5 SWL/SI/GS/NDVI, -1 SLOPE, 1 PT/LUM/ISO
    lum.window_radius        default 2
    gs.supersample           default 10
    slope.method             horn (only choice)
    percapita.enabled        default false
    zscore.domain            all | path to an ASCII grid mask (non-zero = inside)
    moran.scheme             queen | rook, default queen
    decile.threshold         default 6
    run.threads              default: available CPUs
    output.dir               default out
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

from walkgrid.errors import ConfigError
from walkgrid.fields import KINDS, ComponentKind
from walkgrid.grid import GridSpec
from walkgrid.pednet import IsochroneParams
from walkgrid.smoothing import DEFAULT_WEIGHTS, DecayParams, IndexWeights

REQUIRED_INPUTS = ("nodes", "edges", "ndvi", "dem", "corine", "population", "green", "stops")
OPTIONAL_INPUTS = ("urbanization", "admin", "moran_units")

_KNOWN = {
    *(f"input.{k}" for k in REQUIRED_INPUTS + OPTIONAL_INPUTS),
    "grid.origin_x", "grid.origin_y", "grid.n_rows", "grid.n_cols", "grid.cell_size",
    "decay.sigma_m", "iso.budget_s", "iso.speed_mps", "iso.snap_radius_m",
    *(f"index.weights.{k.value}" for k in KINDS),
    "lum.window_radius", "gs.supersample", "slope.method", "percapita.enabled",
    "zscore.domain", "moran.scheme", "decile.threshold", "run.threads", "output.dir",
}

# Keys that cannot change any output byte.
_NOT_HASHED = {"run.threads"}


def parse_config_text(text: str, source="<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _KNOWN:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass
class PipelineConfig:
    inputs: dict
    grid: GridSpec
    decay: DecayParams = DecayParams()
    iso: IsochroneParams = IsochroneParams()
    weights: IndexWeights = field(default_factory=IndexWeights)
    lum_radius: int = 2
    supersample: int = 10
    slope_method: str = "horn"
    per_capita: bool = False
    zscore_domain: Path | None = None
    moran_scheme: str = "queen"
    decile_threshold: int = 6
    threads: int = 1
    output_dir: Path = Path("out")
    raw: dict = field(default_factory=dict)
    source: Path | None = None

    def config_hash(self) -> str:
        lines = [f"{k} = {v}" for k, v in sorted(self.raw.items()) if k not in _NOT_HASHED]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    def input_path(self, name: str) -> Path | None:
        return self.inputs.get(name)

    def validate(self):
        for key in REQUIRED_INPUTS:
            p = self.inputs.get(key)
            if p is None:
                raise ConfigError(f"missing required key input.{key}")
            if not p.exists():
                raise ConfigError(f"input.{key}: file not found: {p}")
        for key in OPTIONAL_INPUTS:
            p = self.inputs.get(key)
            if p is not None and not p.exists():
                raise ConfigError(f"input.{key}: file not found: {p}")
        if self.zscore_domain is not None and not self.zscore_domain.exists():
            raise ConfigError(f"zscore.domain: file not found: {self.zscore_domain}")
        return self


def _num(raw, key, default, kind=float):
    if key not in raw:
        return default
    try:
        return kind(raw[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a {kind.__name__}, got {raw[key]!r}") from None


def _bool(raw, key, default):
    if key not in raw:
        return default
    v = raw[key].lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw[key]!r}")


def config_from_mapping(raw: dict[str, str], base_dir: Path, source: Path | None = None) -> PipelineConfig:
    def path(v):
        p = Path(v)
        return p if p.is_absolute() else (base_dir / p)

    inputs = {}
    for key in REQUIRED_INPUTS + OPTIONAL_INPUTS:
        if f"input.{key}" in raw:
            inputs[key] = path(raw[f"input.{key}"])
    if "moran_units" not in inputs and "admin" in inputs:
        inputs["moran_units"] = inputs["admin"]

    for key in ("grid.origin_x", "grid.origin_y", "grid.n_rows", "grid.n_cols"):
        if key not in raw:
            raise ConfigError(f"missing required key {key}")
    try:
        grid = GridSpec(
            _num(raw, "grid.origin_x", 0.0),
            _num(raw, "grid.origin_y", 0.0),
            _num(raw, "grid.cell_size", 100.0),
            _num(raw, "grid.n_rows", 1, int),
            _num(raw, "grid.n_cols", 1, int),
        )
        decay = DecayParams(_num(raw, "decay.sigma_m", 637.5))
        iso = IsochroneParams(
            _num(raw, "iso.budget_s", 900.0),
            _num(raw, "iso.speed_mps", 5.1 / 3.6),
            _num(raw, "iso.snap_radius_m", 100.0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    weights = dict(DEFAULT_WEIGHTS)
    for k in KINDS:
        weights[k] = _num(raw, f"index.weights.{k.value}", weights[k])
    slope_method = raw.get("slope.method", "horn")
    if slope_method != "horn":
        raise ConfigError(f"slope.method: only 'horn' is supported, got {slope_method!r}")
    scheme = raw.get("moran.scheme", "queen")
    if scheme not in ("queen", "rook"):
        raise ConfigError(f"moran.scheme: expected queen or rook, got {scheme!r}")
    domain = raw.get("zscore.domain", "all")
    threshold = _num(raw, "decile.threshold", 6, int)
    if not 1 <= threshold <= 10:
        raise ConfigError("decile.threshold must be in 1..10")
    lum_radius = _num(raw, "lum.window_radius", 2, int)
    supersample = _num(raw, "gs.supersample", 10, int)
    if lum_radius < 0 or supersample < 1:
        raise ConfigError("lum.window_radius must be >= 0 and gs.supersample >= 1")
    threads = _num(raw, "run.threads", os.cpu_count() or 1, int)
    return PipelineConfig(
        inputs=inputs,
        grid=grid,
        decay=decay,
        iso=iso,
        weights=IndexWeights({ComponentKind(k): v for k, v in weights.items()}),
        lum_radius=lum_radius,
        supersample=supersample,
        slope_method=slope_method,
        per_capita=_bool(raw, "percapita.enabled", False),
        zscore_domain=None if domain == "all" else path(domain),
        moran_scheme=scheme,
        decile_threshold=threshold,
        threads=max(1, threads),
        output_dir=path(raw.get("output.dir", "out")),
        raw=dict(raw),
        source=source,
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    raw = parse_config_text(text, source=str(path))
    return config_from_mapping(raw, path.parent, source=path)
