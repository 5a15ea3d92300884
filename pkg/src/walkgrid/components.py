"""Raw per-cell component fields from rasters, points and polygons.

SWL, SI and ISO are computed from the street graph (see :mod:`walkgrid.pednet`);
:func:`compute_components` assembles all eight.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from walkgrid.errors import AlignmentError, UnsupportedKindError
from walkgrid.fields import ComponentField, ComponentKind
from walkgrid.geoio import PointRecord, RasterLayer
from walkgrid.grid import GridSpec, PolygonGeometry, cells_of_points, points_in_polygon
from walkgrid import pednet

LN5 = math.log(5.0)


class LandUseClass(enum.IntEnum):
    UNCLASSIFIED = 0
    URBAN_FABRIC = 1
    INDUSTRIAL_COMMERCIAL_TRANSPORT = 2
    GREEN_URBAN = 3
    SPORTS_LEISURE = 4
    AGRICULTURAL_NATURAL = 5


# (low, high, class), inclusive CORINE code ranges
CORINE_REMAP = (
    (111, 112, LandUseClass.URBAN_FABRIC),
    (121, 124, LandUseClass.INDUSTRIAL_COMMERCIAL_TRANSPORT),
    (141, 141, LandUseClass.GREEN_URBAN),
    (142, 142, LandUseClass.SPORTS_LEISURE),
    (211, 244, LandUseClass.AGRICULTURAL_NATURAL),
    (311, 324, LandUseClass.AGRICULTURAL_NATURAL),
    (333, 333, LandUseClass.AGRICULTURAL_NATURAL),
    (511, 512, LandUseClass.AGRICULTURAL_NATURAL),
)

PER_CAPITA_KINDS = frozenset({ComponentKind.SWL, ComponentKind.SI, ComponentKind.GS, ComponentKind.PT})


def remap_corine(code: int) -> LandUseClass:
    for lo, hi, cls in CORINE_REMAP:
        if lo <= code <= hi:
            return cls
    return LandUseClass.UNCLASSIFIED


def remap_corine_array(codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes)
    out = np.zeros(codes.shape, dtype=np.int8)
    for lo, hi, cls in CORINE_REMAP:
        out[(codes >= lo) & (codes <= hi)] = int(cls)
    return out


def _field(kind, grid, values, valid=None) -> ComponentField:
    values = np.asarray(values, dtype=np.float64).reshape(grid.shape)
    if valid is None:
        return ComponentField(kind, RasterLayer(grid, values))
    return ComponentField(kind, RasterLayer.from_masked(grid, values, np.reshape(valid, grid.shape)))


def _aligned_blocks(layer: RasterLayer, grid: GridSpec):
    """View ``layer`` as (n_rows, f, n_cols, f) blocks under ``grid`` cells.

    ``layer`` must have a cell size dividing the grid's and an origin on its
    own pixel lattice; it may extend beyond the grid.
    """
    fs = layer.grid.cell_size
    ratio = grid.cell_size / fs
    f = int(round(ratio))
    if f < 1 or abs(ratio - f) > 1e-9 * ratio:
        raise AlignmentError(
            f"raster cell size {fs} does not divide grid cell size {grid.cell_size}"
        )
    offs = []
    for g0, l0 in ((grid.origin_x, layer.grid.origin_x), (grid.origin_y, layer.grid.origin_y)):
        o = (g0 - l0) / fs
        k = int(round(o))
        if abs(o - k) > 1e-6:
            raise AlignmentError(f"raster origin {l0} is not aligned with grid origin {g0}")
        offs.append(k)
    c0, r0 = offs
    r1 = r0 + grid.n_rows * f
    c1 = c0 + grid.n_cols * f
    if r0 < 0 or c0 < 0 or r1 > layer.grid.n_rows or c1 > layer.grid.n_cols:
        raise AlignmentError("raster does not cover the grid extent")
    vals = layer.values[r0:r1, c0:c1]
    valid = layer.valid_mask()[r0:r1, c0:c1]
    shape = (grid.n_rows, f, grid.n_cols, f)
    return vals.reshape(shape), valid.reshape(shape), f


def _block_mean(vals, valid):
    s = np.where(valid, vals, 0.0).sum(axis=(1, 3))
    n = valid.sum(axis=(1, 3))
    out = np.zeros(s.shape)
    np.divide(s, n, out=out, where=n > 0)
    return out, n > 0


def ndvi_field(fine: RasterLayer, grid: GridSpec) -> ComponentField:
    """Mean of the valid fine pixels under each cell."""
    vals, valid, _ = _aligned_blocks(fine, grid)
    mean, ok = _block_mean(vals, valid)
    return _field(ComponentKind.NDVI, grid, mean, ok)


def green_fraction_field(green_polys: list[PolygonGeometry], grid: GridSpec,
                         supersample: int = 10) -> ComponentField:
    """Share of an n x n sample lattice per cell falling inside any green polygon."""
    n = int(supersample)
    if n < 1:
        raise ValueError("supersample must be >= 1")
    step = grid.cell_size / n
    covered = np.zeros((grid.n_rows * n, grid.n_cols * n), dtype=bool)
    for poly in green_polys:
        poly.validate()
        xmin, ymin, xmax, ymax = poly.bounds()
        j0 = max(0, math.floor((xmin - grid.origin_x) / step - 0.5))
        j1 = min(grid.n_cols * n - 1, math.ceil((xmax - grid.origin_x) / step - 0.5))
        i0 = max(0, math.floor((ymin - grid.origin_y) / step - 0.5))
        i1 = min(grid.n_rows * n - 1, math.ceil((ymax - grid.origin_y) / step - 0.5))
        if j1 < j0 or i1 < i0:
            continue
        jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
        xs = grid.origin_x + (jj.ravel() + 0.5) * step
        ys = grid.origin_y + (ii.ravel() + 0.5) * step
        inside = points_in_polygon(xs, ys, poly).reshape(jj.shape)
        covered[i0:i1 + 1, j0:j1 + 1] |= inside
    counts = covered.reshape(grid.n_rows, n, grid.n_cols, n).sum(axis=(1, 3))
    return _field(ComponentKind.GS, grid, counts / float(n * n))


def horn_slope(dem: RasterLayer) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel slope in degrees with Horn's 3x3 stencil.

    Borders use edge replication; nodata neighbours take the centre value.
    Returns ``(slope, valid)``.
    """
    z = dem.values
    valid = dem.valid_mask()
    zc = np.where(valid, z, 0.0)
    zp = np.pad(zc, 1, mode="edge")
    vp = np.pad(valid, 1, mode="edge")
    h, w = z.shape

    def nb(dr, dc):
        sl = zp[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
        ok = vp[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
        return np.where(ok, sl, zc)

    # Row index grows northwards; orientation does not affect the magnitude.
    a, b, c = nb(1, -1), nb(1, 0), nb(1, 1)
    d, f = nb(0, -1), nb(0, 1)
    g, hh, i = nb(-1, -1), nb(-1, 0), nb(-1, 1)
    cs = dem.grid.cell_size
    dzdx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * cs)
    dzdy = ((g + 2.0 * hh + i) - (a + 2.0 * b + c)) / (8.0 * cs)
    slope = np.degrees(np.arctan(np.sqrt(dzdx * dzdx + dzdy * dzdy)))
    return slope, valid


def slope_field(dem: RasterLayer, grid: GridSpec, method: str = "horn") -> ComponentField:
    if method != "horn":
        raise ValueError(f"unsupported slope method {method!r}")
    slope, valid = horn_slope(dem)
    layer = RasterLayer.from_masked(dem.grid, slope, valid, nodata=dem.nodata)
    vals, ok, _ = _aligned_blocks(layer, grid)
    mean, any_ok = _block_mean(vals, ok)
    return _field(ComponentKind.SLOPE, grid, mean, any_ok)


def pt_field(stops: list[PointRecord], grid: GridSpec) -> ComponentField:
    """Transit stops per cell; stops outside the grid are ignored."""
    if stops:
        xs = np.fromiter((s.location[0] for s in stops), dtype=np.float64, count=len(stops))
        ys = np.fromiter((s.location[1] for s in stops), dtype=np.float64, count=len(stops))
        cells = cells_of_points(xs, ys, grid)
        cells = cells[cells >= 0]
    else:
        cells = np.empty(0, dtype=np.int64)
    return _field(ComponentKind.PT, grid, np.bincount(cells, minlength=grid.n_cells))


def window_class_counts(classes: np.ndarray, radius: int, n_classes: int = 5) -> np.ndarray:
    """Per-cell class counts in the (2r+1)^2 window clipped at the borders.

    ``classes`` holds labels 1..n_classes, 0 for excluded cells. Returns an
    array of shape (n_classes, rows, cols).
    """
    rows, cols = classes.shape
    r = int(radius)
    out = np.empty((n_classes, rows, cols), dtype=np.int64)
    ri = np.arange(rows)
    ci = np.arange(cols)
    lo_r = np.clip(ri - r, 0, rows)
    hi_r = np.clip(ri + r + 1, 0, rows)
    lo_c = np.clip(ci - r, 0, cols)
    hi_c = np.clip(ci + r + 1, 0, cols)
    for j in range(1, n_classes + 1):
        integ = np.zeros((rows + 1, cols + 1), dtype=np.int64)
        integ[1:, 1:] = np.cumsum(np.cumsum(classes == j, axis=0), axis=1)
        out[j - 1] = (
            integ[hi_r][:, hi_c] - integ[lo_r][:, hi_c] - integ[hi_r][:, lo_c] + integ[lo_r][:, lo_c]
        )
    return out


def shannon_entropy(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Natural-log entropy over axis 0 of a counts array; returns (H, any)."""
    total = counts.sum(axis=0)
    ok = total > 0
    h = np.zeros(total.shape)
    safe_total = np.where(ok, total, 1)
    for cnt in counts:
        q = cnt / safe_total
        pos = cnt > 0
        h -= np.where(pos, q * np.log(np.where(pos, q, 1.0)), 0.0)
    h = np.minimum(h + 0.0, math.log(counts.shape[0]))
    return h, ok


def lum_field(corine: RasterLayer, grid: GridSpec, window_radius: int = 2) -> ComponentField:
    """Land-use mix entropy over remapped CORINE classes in a square window."""
    if window_radius < 0:
        raise ValueError("window_radius must be >= 0")
    vals, valid, f = _aligned_blocks(corine, grid)
    if f != 1:
        raise AlignmentError("land-cover raster must have the grid's cell size")
    codes = vals.reshape(grid.shape)
    ok = valid.reshape(grid.shape)
    classes = np.where(ok, remap_corine_array(np.where(ok, codes, 0).astype(np.int64)), 0)
    h, any_cls = shannon_entropy(window_class_counts(classes, window_radius))
    return _field(ComponentKind.LUM, grid, h, any_cls)


def per_capita(field: ComponentField, pop: RasterLayer) -> ComponentField:
    """Divide by resident population, with the divisor floored at one person."""
    if field.kind not in PER_CAPITA_KINDS:
        raise UnsupportedKindError(
            f"per-capita scaling applies to SWL, SI, GS and PT, not {field.kind}"
        )
    if pop.grid != field.grid:
        raise AlignmentError("population raster is on a different grid")
    valid = field.valid() & pop.valid_mask()
    p = np.where(pop.valid_mask(), pop.values, 1.0)
    out = field.array() / np.maximum(p, 1.0)
    return _field(field.kind, field.grid, out, valid)


@dataclass
class ComponentInputs:
    graph: pednet.PedestrianGraph
    ndvi: RasterLayer
    dem: RasterLayer
    corine: RasterLayer
    green: list
    stops: list


def compute_components(inputs: ComponentInputs, grid: GridSpec,
                       iso_params: pednet.IsochroneParams = pednet.IsochroneParams(),
                       lum_radius: int = 2, supersample: int = 10, threads: int = 1,
                       backend=None):
    """All eight raw fields plus the isochrones behind ISO.

    Returns ``(fields, isochrones)`` with ``fields`` keyed by kind.
    """
    iso = pednet.compute_isochrones(inputs.graph, grid, iso_params, threads=threads, backend=backend)
    fields = {
        ComponentKind.SWL: pednet.clip_walk_length(inputs.graph, grid, backend=backend),
        ComponentKind.SI: pednet.count_intersections(inputs.graph, grid),
        ComponentKind.GS: green_fraction_field(inputs.green, grid, supersample),
        ComponentKind.NDVI: ndvi_field(inputs.ndvi, grid),
        ComponentKind.SLOPE: slope_field(inputs.dem, grid),
        ComponentKind.PT: pt_field(inputs.stops, grid),
        ComponentKind.LUM: lum_field(inputs.corine, grid, lum_radius),
        ComponentKind.ISO: pednet.iso_area_field(grid, iso),
    }
    return fields, iso
