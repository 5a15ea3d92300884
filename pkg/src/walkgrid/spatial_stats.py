"""Population-weighted aggregation, stratification and spatial autocorrelation.

Missing results are ``None`` (or NaN inside matrices), never a sentinel
number, so they stay distinguishable from a genuine zero.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from walkgrid.errors import DegenerateFieldError, DegenerateWeightsError, InsufficientDataError
from walkgrid.geoio import RasterLayer
from walkgrid.grid import GridSpec, PolygonGeometry, cells_in_polygon_flat, neighbor_offsets

log = logging.getLogger(__name__)


class UrbanizationClass(enum.IntEnum):
    VERY_LOW_DENSITY_RURAL = 1
    LOW_DENSITY_RURAL = 2
    RURAL_CLUSTER = 3
    SUBURBAN_OR_PERI_URBAN = 4
    SEMI_DENSE_URBAN_CLUSTER = 5
    DENSE_URBAN_CLUSTER = 6
    URBAN_CENTRE = 7


def _layer_arrays(layer):
    """Flat values and validity of a RasterLayer or anything holding one."""
    if not isinstance(layer, RasterLayer):
        layer = layer.values
    return layer.values.ravel(), layer.valid_mask().ravel()


def _cells(cells, grid: GridSpec) -> np.ndarray:
    """Sorted unique flat indices from flat ints or (row, col) pairs."""
    if not isinstance(cells, np.ndarray):
        items = list(cells)
        if items and isinstance(items[0], tuple):
            items = [r * grid.n_cols + c for r, c in items]
        cells = np.asarray(items, dtype=np.int64)
    return np.unique(cells.astype(np.int64))


def pop_weighted_mean(field, pop: RasterLayer, cells) -> float | None:
    """Sum(value * pop) / Sum(pop) over usable cells, or None when undefined."""
    grid = pop.grid
    cells = _cells(cells, grid)
    if cells.size == 0:
        raise InsufficientDataError("pop_weighted_mean needs at least one cell")
    v, v_ok = _layer_arrays(field)
    p, p_ok = _layer_arrays(pop)
    use = cells[v_ok[cells] & p_ok[cells]]
    if use.size == 0:
        return None
    weights = p[use]
    total = math.fsum(weights)
    if total == 0.0:
        return None
    return math.fsum(v[use] * weights) / total


def _population(pop: RasterLayer, cells) -> float:
    p, ok = _layer_arrays(pop)
    return math.fsum(p[cells[ok[cells]]])


@dataclass
class AggregateRecord:
    unit_id: str
    means: dict
    index_pw_mean: float | None
    population: float
    cell_count: int


def group_polygons(polygons: list[PolygonGeometry], grid: GridSpec) -> dict[str, np.ndarray]:
    """Cells per polygon id (parts merged), ids in first-seen order."""
    units: dict[str, list] = {}
    for poly in polygons:
        units.setdefault(str(poly.id), []).append(cells_in_polygon_flat(poly, grid))
    return {uid: np.unique(np.concatenate(parts)) for uid, parts in units.items()}


def aggregate_polygons(fields: dict, index, pop: RasterLayer, polygons: list[PolygonGeometry],
                       grid: GridSpec) -> list[AggregateRecord]:
    records = []
    for uid, cells in group_polygons(polygons, grid).items():
        if cells.size == 0:
            log.warning("unit %s contains no cell centroids; skipped", uid)
            continue
        means = {kind: pop_weighted_mean(f, pop, cells) for kind, f in fields.items()}
        idx = pop_weighted_mean(index, pop, cells) if index is not None else None
        records.append(AggregateRecord(uid, means, idx, _population(pop, cells), int(cells.size)))
    return records


@dataclass
class StratumSummary:
    urban_class: UrbanizationClass
    cell_count: int
    population: float
    pop_share: float | None
    pw_mean: float | None
    decile_population: list = field(default_factory=lambda: [0.0] * 10)


def stratify_by_urbanization(field_layer, pop: RasterLayer, urb: RasterLayer, grid: GridSpec,
                             decile_layer: RasterLayer | None = None, cells=None) -> list[StratumSummary]:
    """Per urbanisation class: population share, pop-weighted mean, decile mass.

    Usable cells have a class in 1..7, a valid population and a valid field
    value; shares are relative to the population of all usable cells.
    ``cells`` restricts the computation to a subset of flat indices.
    """
    if urb.grid != grid or pop.grid != grid:
        raise ValueError("urbanisation and population rasters must share the grid")
    v, v_ok = _layer_arrays(field_layer)
    p, p_ok = _layer_arrays(pop)
    u, u_ok = _layer_arrays(urb)
    cls = np.where(u_ok, u, 0.0)
    in_class = u_ok & (cls >= 1) & (cls <= 7) & (cls == np.round(cls))
    usable = in_class & p_ok & v_ok
    if cells is not None:
        subset = np.zeros(grid.n_cells, dtype=bool)
        subset[_cells(cells, grid)] = True
        usable &= subset
    total = math.fsum(p[usable])
    if decile_layer is not None:
        d, d_ok = _layer_arrays(decile_layer)
    out = []
    for c in UrbanizationClass:
        cells = np.flatnonzero(usable & (cls == int(c)))
        pop_c = math.fsum(p[cells])
        hist = [0.0] * 10
        if decile_layer is not None and cells.size:
            dc = cells[d_ok[cells]]
            labels = d[dc].astype(np.int64)
            for k in range(1, 11):
                hist[k - 1] = math.fsum(p[dc[labels == k]])
        out.append(StratumSummary(
            urban_class=c,
            cell_count=int(cells.size),
            population=pop_c,
            pop_share=(pop_c / total) if total > 0 else None,
            pw_mean=(math.fsum(v[cells] * p[cells]) / pop_c) if pop_c > 0 else None,
            decile_population=hist,
        ))
    return out


@dataclass
class CorrMatrix:
    names: list
    values: np.ndarray  # NaN marks a missing entry
    n_pairs: np.ndarray


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    if x.size < 2:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def corr_matrix(records: list[AggregateRecord], kinds, include_index: bool = True) -> CorrMatrix:
    """Pairwise-complete Pearson correlations across aggregate records."""
    if len(records) < 3:
        raise InsufficientDataError(f"correlation needs at least 3 records, got {len(records)}")
    kinds = list(kinds)
    names = [str(k) for k in kinds]
    cols = [[r.means.get(k) for r in records] for k in kinds]
    if include_index:
        names.append("WALK")
        cols.append([r.index_pw_mean for r in records])
    data = np.array([[np.nan if v is None else v for v in c] for c in cols], dtype=np.float64)
    m = len(names)
    out = np.full((m, m), np.nan)
    npairs = np.zeros((m, m), dtype=np.int64)
    for i in range(m):
        for j in range(i, m):
            both = np.isfinite(data[i]) & np.isfinite(data[j])
            npairs[i, j] = npairs[j, i] = int(both.sum())
            r = pearson(data[i][both], data[j][both]) if both.sum() >= 3 else None
            if r is None:
                continue
            if i == j:
                r = 1.0
            out[i, j] = out[j, i] = r
    return CorrMatrix(names, out, npairs)


def pop_weighted_cdf(field, pop: RasterLayer, cells=None):
    """(value, cumulative population share) points in ascending value order.

    Returns ``None`` when the usable population is zero.
    """
    grid = pop.grid
    v, v_ok = _layer_arrays(field)
    p, p_ok = _layer_arrays(pop)
    cells = np.arange(grid.n_cells) if cells is None else _cells(cells, grid)
    use = cells[v_ok[cells] & p_ok[cells]]
    if use.size == 0:
        return None
    order = use[np.argsort(v[use], kind="stable")]
    cum = np.cumsum(p[order])
    if cum[-1] <= 0:
        return None
    return list(zip(v[order].tolist(), (cum / cum[-1]).tolist()))


def pct_below_decile(decile_layer: RasterLayer, pop: RasterLayer, cells=None,
                     threshold: int = 6) -> float | None:
    """Percent of the usable population living in cells below ``threshold``."""
    if not (1 <= int(threshold) <= 10):
        raise ValueError("threshold must be a decile label in 1..10")
    grid = pop.grid
    d, d_ok = _layer_arrays(decile_layer)
    p, p_ok = _layer_arrays(pop)
    cells = np.arange(grid.n_cells) if cells is None else _cells(cells, grid)
    use = cells[d_ok[cells] & p_ok[cells]]
    total = math.fsum(p[use])
    if total == 0.0:
        return None
    below = math.fsum(p[use[d[use] < threshold]])
    return 100.0 * below / total


@dataclass
class SpatialWeights:
    """Binary symmetric contiguity among ``cells`` (sorted flat indices)."""

    cells: np.ndarray
    indptr: np.ndarray
    neighbors: np.ndarray  # positions into ``cells``

    @property
    def total_weight(self) -> int:
        return int(self.neighbors.size)

    def neighbor_lists(self) -> list[np.ndarray]:
        return [self.neighbors[self.indptr[i]:self.indptr[i + 1]] for i in range(len(self.cells))]


def _links(cells: np.ndarray, grid: GridSpec, scheme: str):
    rows, cols = np.divmod(cells, grid.n_cols)
    src, dst = [], []
    for dr, dc in neighbor_offsets(scheme):
        r2, c2 = rows + dr, cols + dc
        inb = (r2 >= 0) & (r2 < grid.n_rows) & (c2 >= 0) & (c2 < grid.n_cols)
        target = r2 * grid.n_cols + c2
        pos = np.searchsorted(cells, target)
        pos_c = np.minimum(pos, len(cells) - 1)
        hit = inb & (cells[pos_c] == target)
        src.append(np.flatnonzero(hit))
        dst.append(pos_c[hit])
    return np.concatenate(src), np.concatenate(dst)


def _csr(n, src, dst):
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.bincount(src, minlength=n))
    return indptr, dst.astype(np.int64)


def build_spatial_weights(cells, grid: GridSpec, scheme: str = "queen") -> SpatialWeights:
    cells = _cells(cells, grid)
    if cells.size == 0:
        raise InsufficientDataError("spatial weights need at least one cell")
    src, dst = _links(cells, grid, scheme)
    if src.size == 0:
        raise DegenerateWeightsError("no two cells in the set are contiguous (W = 0)")
    indptr, nbr = _csr(len(cells), src, dst)
    return SpatialWeights(cells, indptr, nbr)


@dataclass(frozen=True)
class MoranResult:
    I: float
    N: int
    W: float


def morans_i(field, weights: SpatialWeights) -> MoranResult:
    """Global Moran's I over the weight set, dropping nodata cells and their links."""
    v, ok = _layer_arrays(field)
    keep = ok[weights.cells]
    if keep.sum() < 2:
        raise InsufficientDataError("Moran's I needs at least 2 cells with data")
    remap = np.full(len(weights.cells), -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    src = np.repeat(np.arange(len(weights.cells)), np.diff(weights.indptr))
    dst = weights.neighbors
    live = keep[src] & keep[dst]
    src, dst = remap[src[live]], remap[dst[live]]
    w_total = float(src.size)
    if w_total == 0:
        raise DegenerateWeightsError("no links remain between cells with data (W = 0)")
    x = v[weights.cells[keep]]
    n = x.size
    z = x - x.mean()
    denom = float(np.dot(z, z))
    if denom == 0.0 or np.all(x == x[0]):
        raise DegenerateFieldError("field is constant over the unit; Moran's I is undefined")
    num = float(np.dot(z[src], z[dst]))
    return MoranResult((n / w_total) * num / denom, int(n), w_total)
