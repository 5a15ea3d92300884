"""Regular neighbourhood lattice: addressing, geometry and contiguity.

Cells are half-open squares ``[x0, x0 + s) x [y0, y0 + s)``. Row 0 is the
southern edge of the grid and column 0 the western edge, matching the
lower-left-corner convention of ASCII grid headers. Flat cell indices are
row-major: ``row * n_cols + col``.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from walkgrid._backend import kernels
from walkgrid.errors import InvalidGeometryError


class Point(NamedTuple):
    x: float
    y: float


class CellId(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class GridSpec:
    origin_x: float
    origin_y: float
    cell_size: float = 100.0
    n_rows: int = 1
    n_cols: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.origin_x) and math.isfinite(self.origin_y)):
            raise ValueError("grid origin must be finite")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if int(self.n_rows) != self.n_rows or int(self.n_cols) != self.n_cols:
            raise ValueError("n_rows and n_cols must be integers")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError(f"grid needs at least one row and column, got {self.n_rows}x{self.n_cols}")
        if self.n_rows * self.n_cols > sys.maxsize:
            raise ValueError("grid has more cells than the platform can address")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the whole grid."""
        return (
            self.origin_x,
            self.origin_y,
            self.origin_x + self.n_cols * self.cell_size,
            self.origin_y + self.n_rows * self.cell_size,
        )

    def contains(self, c: CellId) -> bool:
        return 0 <= c.row < self.n_rows and 0 <= c.col < self.n_cols

    def flat(self, c: CellId) -> int:
        return c.row * self.n_cols + c.col

    def unflat(self, i: int) -> CellId:
        r, c = divmod(int(i), self.n_cols)
        return CellId(r, c)

    def centroids(self) -> tuple[np.ndarray, np.ndarray]:
        """Centroid coordinates of every cell, flattened in row-major order."""
        cols = np.arange(self.n_cols, dtype=np.float64)
        rows = np.arange(self.n_rows, dtype=np.float64)
        xs = self.origin_x + (cols + 0.5) * self.cell_size
        ys = self.origin_y + (rows + 0.5) * self.cell_size
        return np.tile(xs, self.n_rows), np.repeat(ys, self.n_cols)


def cell_of_point(p: Point, g: GridSpec) -> CellId | None:
    """Cell containing ``p``, or ``None`` when ``p`` lies outside the grid."""
    x, y = p
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"point must be finite, got {p!r}")
    col = math.floor((x - g.origin_x) / g.cell_size)
    row = math.floor((y - g.origin_y) / g.cell_size)
    if 0 <= row < g.n_rows and 0 <= col < g.n_cols:
        return CellId(row, col)
    return None


def cells_of_points(xs, ys, g: GridSpec) -> np.ndarray:
    """Vectorised :func:`cell_of_point`; returns flat indices, -1 when outside."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    cols = np.floor((xs - g.origin_x) / g.cell_size)
    rows = np.floor((ys - g.origin_y) / g.cell_size)
    inside = (rows >= 0) & (rows < g.n_rows) & (cols >= 0) & (cols < g.n_cols)
    out = np.full(xs.shape, -1, dtype=np.int64)
    out[inside] = rows[inside].astype(np.int64) * g.n_cols + cols[inside].astype(np.int64)
    return out


def centroid(c: CellId, g: GridSpec) -> Point:
    return Point(
        g.origin_x + (c.col + 0.5) * g.cell_size,
        g.origin_y + (c.row + 0.5) * g.cell_size,
    )


@dataclass
class PolygonGeometry:
    """Planar polygon with optional holes; every ring is explicitly closed."""

    outer_ring: np.ndarray
    holes: list = field(default_factory=list)
    properties: dict = field(default_factory=dict)

    def __post_init__(self):
        self.outer_ring = _as_ring(self.outer_ring)
        self.holes = [_as_ring(h) for h in self.holes]

    @property
    def id(self):
        return self.properties.get("id")

    def rings(self) -> list[np.ndarray]:
        return [self.outer_ring, *self.holes]

    def bounds(self) -> tuple[float, float, float, float]:
        r = self.outer_ring
        return (r[:, 0].min(), r[:, 1].min(), r[:, 0].max(), r[:, 1].max())

    def validate(self):
        for k, ring in enumerate(self.rings()):
            if not np.array_equal(ring[0], ring[-1]):
                raise InvalidGeometryError(f"ring {k} of polygon {self.id!r} is not closed")
            if len(np.unique(ring[:-1], axis=0)) < 3:
                raise InvalidGeometryError(
                    f"ring {k} of polygon {self.id!r} has fewer than 3 distinct vertices"
                )


def _as_ring(coords) -> np.ndarray:
    arr = np.asarray(coords, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidGeometryError(f"ring must be an (n, 2) coordinate list, got shape {arr.shape}")
    return arr


def _flatten_rings(rings) -> tuple[np.ndarray, np.ndarray]:
    ptr = [0]
    for r in rings:
        ptr.append(ptr[-1] + len(r))
    coords = np.ascontiguousarray(np.concatenate(rings, axis=0), dtype=np.float64)
    return coords, np.asarray(ptr, dtype=np.int64)


def points_in_polygon(xs, ys, poly: PolygonGeometry) -> np.ndarray:
    """Even-odd containment of each point against all rings of ``poly``."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    coords, ptr = _flatten_rings(poly.rings())
    return kernels.points_in_rings(xs, ys, coords, ptr).astype(bool)


def cells_in_polygon(poly: PolygonGeometry, g: GridSpec) -> set[CellId]:
    return {g.unflat(i) for i in cells_in_polygon_flat(poly, g)}


def cells_in_polygon_flat(poly: PolygonGeometry, g: GridSpec) -> np.ndarray:
    """Sorted flat indices of cells whose centroid lies inside ``poly``."""
    poly.validate()
    xmin, ymin, xmax, ymax = poly.bounds()
    s = g.cell_size
    # Centroid window covering the polygon bbox.
    c0 = max(0, math.floor((xmin - g.origin_x) / s - 0.5))
    c1 = min(g.n_cols - 1, math.ceil((xmax - g.origin_x) / s - 0.5))
    r0 = max(0, math.floor((ymin - g.origin_y) / s - 0.5))
    r1 = min(g.n_rows - 1, math.ceil((ymax - g.origin_y) / s - 0.5))
    if c1 < c0 or r1 < r0:
        return np.empty(0, dtype=np.int64)
    cols = np.arange(c0, c1 + 1)
    rows = np.arange(r0, r1 + 1)
    cc, rr = np.meshgrid(cols, rows)
    cc = cc.ravel()
    rr = rr.ravel()
    xs = g.origin_x + (cc + 0.5) * s
    ys = g.origin_y + (rr + 0.5) * s
    inside = points_in_polygon(xs, ys, poly)
    return np.sort(rr[inside].astype(np.int64) * g.n_cols + cc[inside])


_ROOK = ((-1, 0), (0, -1), (0, 1), (1, 0))
_QUEEN = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def neighbor_offsets(scheme: str):
    if scheme == "rook":
        return _ROOK
    if scheme == "queen":
        return _QUEEN
    raise ValueError(f"unknown contiguity scheme {scheme!r}; use 'rook' or 'queen'")


def contiguity_neighbors(c: CellId, g: GridSpec, scheme: str = "queen") -> set[CellId]:
    out = set()
    for dr, dc in neighbor_offsets(scheme):
        n = CellId(c.row + dr, c.col + dc)
        if g.contains(n):
            out.add(n)
    return out
