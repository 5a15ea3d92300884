"""Distance-decay smoothing, z-score standardisation, index composition, deciles."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from walkgrid._backend import get_kernels
from walkgrid.errors import ConfigError, DegenerateFieldError, InsufficientDataError
from walkgrid.fields import KINDS, ComponentField, ComponentKind
from walkgrid.geoio import RasterLayer
from walkgrid.pednet import IsochroneSet


@dataclass(frozen=True)
class DecayParams:
    sigma: float = 637.5

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")


DEFAULT_WEIGHTS = {
    ComponentKind.SWL: 0.5,
    ComponentKind.SI: 0.5,
    ComponentKind.GS: 0.5,
    ComponentKind.NDVI: 0.5,
    ComponentKind.SLOPE: -1.0,
    ComponentKind.PT: 1.0,
    ComponentKind.LUM: 1.0,
    ComponentKind.ISO: 1.0,
}


@dataclass(frozen=True)
class IndexWeights:
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        w = {ComponentKind(k): float(v) for k, v in self.weights.items()}
        missing = [k.value for k in KINDS if k not in w]
        if missing:
            raise ConfigError(f"index weights missing for {', '.join(missing)}")
        if w[ComponentKind.SLOPE] > 0:
            raise ConfigError("SLOPE weight must be <= 0")
        object.__setattr__(self, "weights", w)

    def __getitem__(self, kind):
        return self.weights[ComponentKind(kind)]


@dataclass(frozen=True)
class NormStats:
    kind: ComponentKind
    mean: float
    std: float
    degenerate: bool = False


def gaussian_weight(d, params: DecayParams = DecayParams()):
    """exp(-d^2 / (2 sigma^2)); works on scalars and arrays."""
    if np.isscalar(d):
        if d < 0:
            raise ValueError("distance must be non-negative")
        return math.exp(-(d * d) / (2.0 * params.sigma * params.sigma))
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    return np.exp(-(d * d) / (2.0 * params.sigma * params.sigma))


def smooth_component(raw: ComponentField, isochrones: IsochroneSet,
                     params: DecayParams = DecayParams(), threads: int = 1,
                     backend=None) -> ComponentField:
    """Gaussian-weighted mean of ``raw`` over each origin's reached cells.

    Nodata contributors are skipped; an origin with no valid contributor is
    nodata, as is every cell without an isochrone.
    """
    grid = raw.grid
    if isochrones.grid != grid:
        raise ValueError("isochrones were computed on a different grid")
    values = np.ascontiguousarray(raw.array().ravel())
    valid = np.ascontiguousarray(raw.valid().ravel().astype(np.uint8))
    k = get_kernels(backend)
    n = len(isochrones)
    indptr = isochrones.indptr

    def run(span):
        a, b = span
        lo, hi = indptr[a], indptr[b]
        return k.smooth_csr(
            np.ascontiguousarray(indptr[a:b + 1] - lo),
            isochrones.cells[lo:hi], isochrones.dists[lo:hi],
            values, valid, float(params.sigma),
        )

    spans = _spans(n, max(1, threads) * 4) if n else []
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    out = np.zeros(grid.n_cells)
    ok = np.zeros(grid.n_cells, dtype=bool)
    if parts:
        out[isochrones.origins] = np.concatenate([p[0] for p in parts])
        ok[isochrones.origins] = np.concatenate([p[1] for p in parts]).astype(bool)
    layer = RasterLayer.from_masked(grid, out.reshape(grid.shape), ok.reshape(grid.shape))
    return ComponentField(raw.kind, layer)


def _spans(n, k):
    edges = np.linspace(0, n, min(k, n) + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def zscore(field: ComponentField, domain_mask: np.ndarray | None = None,
           allow_degenerate: bool = False) -> tuple[ComponentField, NormStats]:
    """Standardise with the population mean and std over the domain.

    Cells outside ``domain_mask`` (when given) become nodata. A constant
    field raises :class:`DegenerateFieldError` unless ``allow_degenerate``,
    in which case every usable cell gets z = 0.
    """
    grid = field.grid
    usable = field.valid()
    if domain_mask is not None:
        usable = usable & np.asarray(domain_mask, dtype=bool).reshape(grid.shape)
    x = field.array()[usable]
    if x.size < 2:
        raise InsufficientDataError(f"{field.kind}: need at least 2 cells to standardise, got {x.size}")
    mu = float(np.mean(x))
    dev = x - mu
    sd = float(np.sqrt(np.mean(dev * dev)))
    if np.all(x == x[0]) or sd == 0.0:
        if not allow_degenerate:
            raise DegenerateFieldError(f"{field.kind}: constant field, standard deviation is 0")
        z = np.zeros(grid.shape)
        layer = RasterLayer.from_masked(grid, z, usable)
        return ComponentField(field.kind, layer), NormStats(field.kind, mu, 0.0, True)
    z = np.zeros(grid.shape)
    z[usable] = dev / sd
    layer = RasterLayer.from_masked(grid, z, usable)
    return ComponentField(field.kind, layer), NormStats(field.kind, mu, sd)


def compose_index(z: dict, w: IndexWeights = IndexWeights()) -> RasterLayer:
    """Cellwise weighted sum of the eight z-fields; any nodata input gives nodata."""
    missing = [k.value for k in KINDS if k not in z]
    if missing:
        raise ConfigError(f"index composition needs z-fields for {', '.join(missing)}")
    grid = z[KINDS[0]].grid
    total = np.zeros(grid.shape)
    ok = np.ones(grid.shape, dtype=bool)
    for kind in KINDS:
        f = z[kind]
        if f.grid != grid:
            raise ConfigError(f"z-field {kind} is on a different grid")
        ok &= f.valid()
        total = total + w[kind] * np.where(f.valid(), f.array(), 0.0)
    return RasterLayer.from_masked(grid, total, ok)


def deciles(index: RasterLayer) -> RasterLayer:
    """Nearest-rank decile labels 1..10; ties keep (row, col) order."""
    grid = index.grid
    flat = index.values.ravel()
    valid = index.valid_mask().ravel()
    cells = np.flatnonzero(valid)
    m = len(cells)
    if m < 10:
        raise InsufficientDataError(f"need at least 10 valid cells for deciles, got {m}")
    order = cells[np.argsort(flat[cells], kind="stable")]
    pos = np.arange(m, dtype=np.int64)  # p - 1
    labels = np.minimum(10, (pos * 10) // m + 1)
    out = np.zeros(grid.n_cells)
    out[order] = labels
    return RasterLayer.from_masked(grid, out.reshape(grid.shape), valid.reshape(grid.shape))
