"""Pedestrian street graph, per-cell street metrics and network isochrones."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from walkgrid._backend import get_kernels
from walkgrid.errors import GraphError
from walkgrid.fields import ComponentField, ComponentKind
from walkgrid.geoio import RasterLayer, RawEdge, polyline_length
from walkgrid.grid import CellId, GridSpec, Point, cells_of_points

log = logging.getLogger(__name__)

ENDPOINT_TOL = 1e-6


@dataclass(frozen=True)
class IsochroneParams:
    budget: float = 900.0
    speed: float = 5.1 / 3.6
    snap_radius: float = 100.0

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError(f"budget must be positive, got {self.budget}")
        if not self.speed > 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        if not self.snap_radius >= 0:
            raise ValueError(f"snap_radius must be non-negative, got {self.snap_radius}")

    @property
    def max_distance(self) -> float:
        # Rounded to the nanometre: 900 s at 5.1 km/h is 1275 m, not 1274.9999999999998.
        return round(self.budget * self.speed, 9)


@dataclass
class Edge:
    u: int
    v: int
    coords: np.ndarray
    length: float


@dataclass
class PedestrianGraph:
    node_ids: list
    coords: np.ndarray
    edges: list
    indptr: np.ndarray
    neighbors: np.ndarray
    weights: np.ndarray
    incident: list = field(repr=False, default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def degree(self) -> np.ndarray:
        """Incident edge count per node; a self-loop counts twice."""
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for e in self.edges:
            deg[e.u] += 1
            deg[e.v] += 1
        return deg

    def total_length(self) -> float:
        return math.fsum(e.length for e in self.edges)


def _canonical_key(u: str, v: str, coords: np.ndarray, length: float):
    if (u, v) > (v, u):
        u, v = v, u
        coords = coords[::-1]
    a = np.ascontiguousarray(coords).tobytes()
    if u == v:
        a = min(a, np.ascontiguousarray(coords[::-1]).tobytes())
    return (u, v, a, length)


def build_graph(nodes: dict[str, Point] | None, edges: list[RawEdge]) -> PedestrianGraph:
    """Undirected pedestrian graph from node coordinates and raw edges.

    Without a node table, node positions come from the polyline endpoints.
    Exact duplicates (same endpoints, same geometry) collapse to one edge and
    zero-length edges are dropped.
    """
    positions: dict[str, tuple[float, float]] = {}
    if nodes is not None:
        positions = {k: (float(p[0]), float(p[1])) for k, p in nodes.items()}
    else:
        for e in edges:
            for nid, pt in ((e.u, e.coords[0]), (e.v, e.coords[-1])):
                pt = (float(pt[0]), float(pt[1]))
                prev = positions.setdefault(nid, pt)
                if math.dist(prev, pt) > ENDPOINT_TOL:
                    raise GraphError(
                        f"edge {e.u}-{e.v} (row {e.row}) places node {nid!r} at {pt}, "
                        f"but another edge places it at {prev}"
                    )
    node_ids = sorted(positions, key=_node_sort_key)
    index = {nid: i for i, nid in enumerate(node_ids)}
    coords = np.array([positions[n] for n in node_ids], dtype=np.float64).reshape(-1, 2)

    kept: list[Edge] = []
    seen = set()
    for e in edges:
        if e.u not in index or e.v not in index:
            raise GraphError(f"edge {e.u}-{e.v} (row {e.row}) references an unknown node")
        pu, pv = coords[index[e.u]], coords[index[e.v]]
        if e.coords is None:
            line = np.array([pu, pv])
        else:
            line = np.asarray(e.coords, dtype=np.float64)
            du = math.dist(line[0], pu)
            dv = math.dist(line[-1], pv)
            if du > ENDPOINT_TOL or dv > ENDPOINT_TOL:
                raise GraphError(
                    f"edge {e.u}-{e.v} (row {e.row}): polyline ends are {du:.6g} m and "
                    f"{dv:.6g} m from their nodes (tolerance {ENDPOINT_TOL} m)"
                )
        if not e.length > 0:
            continue
        key = _canonical_key(e.u, e.v, line, e.length)
        if key in seen:
            continue
        seen.add(key)
        kept.append(Edge(index[e.u], index[e.v], line, float(e.length)))

    n = len(node_ids)
    incident = [[] for _ in range(n)]
    best: dict[tuple[int, int], float] = {}
    for k, e in enumerate(kept):
        incident[e.u].append(k)
        if e.v != e.u:
            incident[e.v].append(k)
            for a, b in ((e.u, e.v), (e.v, e.u)):
                if e.length < best.get((a, b), math.inf):
                    best[(a, b)] = e.length
    pairs = sorted(best)
    src = np.array([p[0] for p in pairs], dtype=np.int64)
    nbr = np.array([p[1] for p in pairs], dtype=np.int64)
    w = np.array([best[p] for p in pairs], dtype=np.float64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    return PedestrianGraph(node_ids, coords, kept, indptr, nbr, w, incident)


def _node_sort_key(nid: str):
    # Numeric ids sort numerically, everything else lexically after them.
    try:
        return (0, int(nid), "")
    except ValueError:
        return (1, 0, nid)


def count_intersections(g: PedestrianGraph, grid: GridSpec) -> ComponentField:
    """Nodes of degree >= 3 per cell."""
    deg = g.degree()
    hubs = np.flatnonzero(deg >= 3)
    cells = cells_of_points(g.coords[hubs, 0], g.coords[hubs, 1], grid)
    cells = cells[cells >= 0]
    counts = np.bincount(cells, minlength=grid.n_cells).astype(np.float64)
    return ComponentField(ComponentKind.SI, RasterLayer(grid, counts.reshape(grid.shape)))


def _polyline_arrays(g: PedestrianGraph):
    lines = [e.coords for e in g.edges]
    ptr = np.zeros(len(lines) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(c) for c in lines])
    coords = (
        np.ascontiguousarray(np.concatenate(lines), dtype=np.float64)
        if lines
        else np.zeros((0, 2), dtype=np.float64)
    )
    scale = np.ones(len(lines), dtype=np.float64)
    for k, e in enumerate(g.edges):
        geo = polyline_length(e.coords)
        if geo > 0 and e.length != geo:
            scale[k] = e.length / geo
        elif geo == 0:
            scale[k] = 0.0
    return coords, ptr, scale


def clip_walk_length(g: PedestrianGraph, grid: GridSpec, backend=None) -> ComponentField:
    """Street length per cell, with every polyline split at cell boundaries."""
    coords, ptr, scale = _polyline_arrays(g)
    k = get_kernels(backend)
    out = k.clip_polylines(
        coords, ptr, scale, float(grid.origin_x), float(grid.origin_y),
        float(grid.cell_size), int(grid.n_rows), int(grid.n_cols),
    )
    return ComponentField(ComponentKind.SWL, RasterLayer(grid, np.asarray(out).reshape(grid.shape)))


# --------------------------------------------------------------------------
# Isochrones


@dataclass(frozen=True)
class IsochroneResult:
    origin: CellId
    reached_cells: dict


@dataclass
class IsochroneSet:
    """Reach lists for a batch of origin cells, stored row-compressed.

    Row ``i`` belongs to flat cell ``origins[i]``; its reached cells are
    ``cells[indptr[i]:indptr[i+1]]`` (sorted) with network distances in
    ``dists`` at the same positions.
    """

    grid: GridSpec
    origins: np.ndarray
    indptr: np.ndarray
    cells: np.ndarray
    dists: np.ndarray

    def __len__(self):
        return len(self.origins)

    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    def row_of(self, flat_cell: int) -> int:
        pos = np.searchsorted(self.origins, flat_cell)
        if pos >= len(self.origins) or self.origins[pos] != flat_cell:
            raise KeyError(f"no isochrone for cell {self.grid.unflat(flat_cell)}")
        return int(pos)

    def result(self, cell: CellId) -> IsochroneResult:
        i = self.row_of(self.grid.flat(cell))
        a, b = self.indptr[i], self.indptr[i + 1]
        reached = {
            self.grid.unflat(c): float(d) for c, d in zip(self.cells[a:b], self.dists[a:b])
        }
        return IsochroneResult(cell, reached)

    def __iter__(self):
        for o in self.origins:
            yield self.result(self.grid.unflat(o))


def snap_cells(g: PedestrianGraph, grid: GridSpec, radius: float, flat_cells=None):
    """Nearest node (straight line, within ``radius``) for cell centroids.

    Returns ``(node, dist)`` arrays; node is -1 where nothing is in range.
    """
    xs, ys = grid.centroids()
    if flat_cells is not None:
        xs, ys = xs[flat_cells], ys[flat_cells]
    node = np.full(len(xs), -1, dtype=np.int64)
    dist = np.full(len(xs), np.inf)
    if g.n_nodes == 0 or len(xs) == 0:
        return node, dist
    tree = cKDTree(g.coords)
    d, idx = tree.query(np.column_stack([xs, ys]), k=1,
                        distance_upper_bound=radius * (1 + 1e-9) + 1e-9)
    near = np.isfinite(d)
    # The tree only picks the node. The distance is recomputed as
    # sqrt(dx*dx + dy*dy), which every IEEE platform rounds identically
    # (hypot implementations differ in the last bit).
    dx = g.coords[idx[near], 0] - xs[near]
    dy = g.coords[idx[near], 1] - ys[near]
    d[near] = np.sqrt(dx * dx + dy * dy)
    hit = near & (d <= radius)
    node[hit] = idx[hit]
    dist[hit] = d[hit]
    return node, dist


def compute_isochrones(g: PedestrianGraph, grid: GridSpec, params: IsochroneParams,
                       origins=None, threads: int = 1, backend=None) -> IsochroneSet:
    """Network isochrones for ``origins`` (flat cell indices; all cells by default).

    A cell joins an origin's reach when
    ``snap(origin) + network(u, v) + snap(cell) <= budget * speed``; the
    origin itself is always present at distance 0.
    """
    limit = params.max_distance
    if origins is None:
        origins = np.arange(grid.n_cells, dtype=np.int64)
    origins = np.unique(np.asarray(origins, dtype=np.int64))
    if len(origins) and (origins[0] < 0 or origins[-1] >= grid.n_cells):
        raise ValueError("origin cell outside the grid")

    cell_node, cell_snap = snap_cells(g, grid, params.snap_radius)
    o_node = cell_node[origins]
    o_snap = cell_snap[origins]

    # node -> snapped cells, cells ascending within each node
    snapped = np.flatnonzero(cell_node >= 0)
    order = np.lexsort((snapped, cell_node[snapped]))
    nc_cell = snapped[order]
    nc_snap = cell_snap[nc_cell]
    nc_ptr = np.zeros(g.n_nodes + 1, dtype=np.int64)
    np.add.at(nc_ptr, cell_node[nc_cell] + 1, 1)
    nc_ptr = np.cumsum(nc_ptr)

    # origins with a node, grouped by node (cells ascending within group)
    has = np.flatnonzero(o_node >= 0)
    gorder = has[np.lexsort((origins[has], o_node[has]))]
    g_nodes, g_start = np.unique(o_node[gorder], return_index=True)
    grp_ptr = np.append(g_start, len(gorder)).astype(np.int64)

    k = get_kernels(backend)
    chunks = _group_chunks(grp_ptr, max(1, threads) * 4)

    def run(chunk):
        g0, g1 = chunk
        lo, hi = grp_ptr[g0], grp_ptr[g1]
        return k.isochrone_groups(
            g.indptr, g.neighbors, g.weights, nc_ptr, nc_cell, nc_snap,
            np.ascontiguousarray(g_nodes[g0:g1]),
            np.ascontiguousarray(grp_ptr[g0:g1 + 1] - lo),
            np.ascontiguousarray(origins[gorder[lo:hi]]),
            np.ascontiguousarray(o_snap[gorder[lo:hi]]),
            float(limit),
        )

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]

    counts = np.ones(len(origins), dtype=np.int64)
    if parts:
        counts[gorder] = np.concatenate([p[0] for p in parts])
        g_cells = np.concatenate([p[1] for p in parts])
        g_dists = np.concatenate([p[2] for p in parts])
    else:
        g_cells = np.empty(0, dtype=np.int64)
        g_dists = np.empty(0, dtype=np.float64)

    indptr = np.zeros(len(origins) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(counts)
    cells = np.empty(indptr[-1], dtype=np.int64)
    dists = np.zeros(indptr[-1], dtype=np.float64)

    # Scatter each grouped block to its origin's row.
    g_counts = counts[gorder]
    src_start = np.cumsum(g_counts) - g_counts
    dst_start = indptr[gorder]
    within = np.arange(g_counts.sum()) - np.repeat(src_start, g_counts)
    dst = np.repeat(dst_start, g_counts) + within
    cells[dst] = g_cells
    dists[dst] = g_dists
    lonely = np.flatnonzero(o_node < 0)
    cells[indptr[lonely]] = origins[lonely]
    return IsochroneSet(grid, origins, indptr, cells, dists)


def _group_chunks(grp_ptr, n_chunks):
    """Split groups into contiguous ranges of roughly equal origin counts."""
    n_groups = len(grp_ptr) - 1
    if n_groups == 0:
        return []
    total = grp_ptr[-1]
    bounds = np.searchsorted(grp_ptr, np.linspace(0, total, n_chunks + 1)[1:-1])
    bounds = np.unique(np.concatenate([[0], bounds, [n_groups]]))
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def isochrone(g: PedestrianGraph, origin_cell: CellId, grid: GridSpec,
              params: IsochroneParams = IsochroneParams()) -> IsochroneResult:
    if not grid.contains(origin_cell):
        raise ValueError(f"origin {origin_cell} is outside the grid")
    iso = compute_isochrones(g, grid, params, origins=[grid.flat(origin_cell)])
    return iso.result(origin_cell)


def iso_area_field(grid: GridSpec, isochrones: IsochroneSet) -> ComponentField:
    """Reachable area (m^2) per origin cell; cells without an isochrone are nodata."""
    vals = np.full(grid.n_cells, np.nan)
    vals[isochrones.origins] = isochrones.sizes() * (grid.cell_size * grid.cell_size)
    valid = np.zeros(grid.n_cells, dtype=bool)
    valid[isochrones.origins] = True
    layer = RasterLayer.from_masked(grid, vals.reshape(grid.shape), valid.reshape(grid.shape))
    return ComponentField(ComponentKind.ISO, layer)
