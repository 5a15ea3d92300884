"""Readers and writers for ASCII grids, CSV tables, GeoJSON and PPM maps.

ASCII grids are ESRI-style: six header lines followed by rows listed north
row first. In memory, row 0 is the southern row, so readers flip and
writers flip back.
"""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from walkgrid.errors import InvalidGeometryError, ParseError
from walkgrid.grid import GridSpec, Point, PolygonGeometry

__all__ = [
    "RasterLayer",
    "PointRecord",
    "RawEdge",
    "PolygonGeometry",
    "DECILE_PALETTE",
    "NODATA_RGB",
    "read_ascii_grid",
    "write_ascii_grid",
    "read_points_csv",
    "read_nodes_csv",
    "read_edges_csv",
    "read_polygons_geojson",
    "render_decile_map",
    "fmt_float",
]

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def fmt_float(v: float) -> str:
    """Shortest text that still round-trips at 17 significant digits."""
    return "%.17g" % v


def _bits(a):
    return np.ascontiguousarray(a, dtype=np.float64).view(np.int64)


@dataclass
class RasterLayer:
    grid: GridSpec
    values: np.ndarray
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"raster values have shape {self.values.shape}, grid expects {self.grid.shape}"
            )
        data = self.values[self.valid_mask()]
        if not np.all(np.isfinite(data)):
            raise ValueError("raster holds non-finite values that are not the nodata sentinel")

    def nodata_mask(self) -> np.ndarray:
        """True where the cell carries the sentinel (exact bit comparison)."""
        return _bits(self.values) == _bits(np.float64(self.nodata))

    def valid_mask(self) -> np.ndarray:
        return ~self.nodata_mask()

    @classmethod
    def from_masked(cls, grid: GridSpec, values, valid, nodata: float = DEFAULT_NODATA):
        out = np.where(valid, values, nodata).astype(np.float64)
        return cls(grid, out, nodata)

    def __eq__(self, other):
        if not isinstance(other, RasterLayer):
            return NotImplemented
        return (
            self.grid == other.grid
            and _bits(np.float64(self.nodata)) == _bits(np.float64(other.nodata))
            and np.array_equal(_bits(self.values), _bits(other.values))
        )


@dataclass
class PointRecord:
    location: Point
    category: str

    def __post_init__(self):
        if not self.category:
            raise ValueError("point category must be non-empty")


@dataclass
class RawEdge:
    """One row of an edges table.

    ``coords`` is the polyline (``None`` for length-only rows until node
    coordinates fill it in); ``length`` is the declared routing length.
    """

    u: str
    v: str
    coords: np.ndarray | None
    length: float
    self_loop: bool = False
    row: int = 0


# --------------------------------------------------------------------------
# ASCII grid


def read_ascii_grid(path) -> RasterLayer:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = {}
    for i, key in enumerate(_HEADER_KEYS):
        if i >= len(lines):
            raise ParseError(f"missing header line {key!r}", path, f"line {i + 1}")
        toks = lines[i].split()
        if len(toks) != 2 or toks[0].lower() != key:
            raise ParseError(f"expected header {key!r}, got {lines[i]!r}", path, f"line {i + 1}")
        try:
            header[key] = float(toks[1]) if key not in ("ncols", "nrows") else int(toks[1])
        except ValueError:
            raise ParseError(f"bad header value {toks[1]!r}", path, f"line {i + 1}") from None
    nrows, ncols = header["nrows"], header["ncols"]
    try:
        grid = GridSpec(header["xllcorner"], header["yllcorner"], header["cellsize"], nrows, ncols)
    except ValueError as exc:
        raise ParseError(str(exc), path, "header") from None
    body = [ln for ln in lines[6:]]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != nrows:
        raise ParseError(f"expected {nrows} data rows, found {len(body)}", path, f"line {6 + len(body)}")
    nodata = header["nodata_value"]
    nodata_bits = _bits(np.float64(nodata))
    values = np.empty((nrows, ncols), dtype=np.float64)
    for i, ln in enumerate(body):
        lineno = 7 + i
        toks = ln.split()
        if len(toks) != ncols:
            raise ParseError(f"expected {ncols} values, found {len(toks)}", path, f"line {lineno}")
        try:
            row = np.array([float(t) for t in toks], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"non-numeric token ({exc})", path, f"line {lineno}") from None
        bad = ~np.isfinite(row) & (_bits(row) != nodata_bits)
        if bad.any():
            raise ParseError(f"non-finite value {toks[int(np.argmax(bad))]!r}", path, f"line {lineno}")
        values[nrows - 1 - i] = row
    return RasterLayer(grid, values, nodata)


def write_ascii_grid(layer: RasterLayer, path) -> None:
    g = layer.grid
    parts = [
        f"ncols {g.n_cols}\n",
        f"nrows {g.n_rows}\n",
        f"xllcorner {fmt_float(g.origin_x)}\n",
        f"yllcorner {fmt_float(g.origin_y)}\n",
        f"cellsize {fmt_float(g.cell_size)}\n",
        f"NODATA_value {fmt_float(layer.nodata)}\n",
    ]
    vals = layer.values
    line_fmt = " ".join(["%.17g"] * g.n_cols) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(parts)
        for r in range(g.n_rows - 1, -1, -1):
            fh.write(line_fmt % tuple(vals[r].tolist()))


# --------------------------------------------------------------------------
# CSV tables


def _open_csv(path, expected_headers):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        fh.close()
        raise ParseError("missing header", path, "line 1") from None
    header = [h.strip() for h in header]
    if header not in [list(h) for h in expected_headers]:
        fh.close()
        wanted = " or ".join(",".join(h) for h in expected_headers)
        raise ParseError(f"header must be {wanted}, got {','.join(header)}", path, "line 1")
    return fh, reader, header


def _float_field(tok, path, row, name):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"{name} is not a number: {tok!r}", path, f"row {row}") from None
    if not math.isfinite(v):
        raise ParseError(f"{name} is not finite: {tok!r}", path, f"row {row}")
    return v


def read_points_csv(path) -> list[PointRecord]:
    fh, reader, _ = _open_csv(path, [("x", "y", "category")])
    out = []
    with fh:
        for row_no, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != 3:
                raise ParseError(f"expected 3 fields, got {len(rec)}", path, f"row {row_no}")
            x = _float_field(rec[0], path, row_no, "x")
            y = _float_field(rec[1], path, row_no, "y")
            cat = rec[2].strip()
            if not cat:
                raise ParseError("empty category", path, f"row {row_no}")
            out.append(PointRecord(Point(x, y), cat))
    return out


def read_nodes_csv(path) -> dict[str, Point]:
    fh, reader, _ = _open_csv(path, [("id", "x", "y")])
    nodes = {}
    with fh:
        for row_no, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != 3:
                raise ParseError(f"expected 3 fields, got {len(rec)}", path, f"row {row_no}")
            nid = rec[0].strip()
            if nid in nodes:
                raise ParseError(f"duplicate node id {nid!r}", path, f"row {row_no}")
            nodes[nid] = Point(
                _float_field(rec[1], path, row_no, "x"), _float_field(rec[2], path, row_no, "y")
            )
    return nodes


_WKT_RE = re.compile(r"^\s*LINESTRING\s*\((.*)\)\s*$", re.IGNORECASE | re.DOTALL)


def parse_wkt_linestring(text: str) -> np.ndarray:
    m = _WKT_RE.match(text)
    if not m:
        raise ValueError(f"not a WKT LINESTRING: {text[:40]!r}")
    pts = []
    for pair in m.group(1).split(","):
        toks = pair.split()
        if len(toks) != 2:
            raise ValueError(f"bad coordinate pair {pair.strip()!r}")
        x, y = float(toks[0]), float(toks[1])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite coordinate {pair.strip()!r}")
        pts.append((x, y))
    if len(pts) < 2:
        raise ValueError("LINESTRING needs at least two points")
    return np.asarray(pts, dtype=np.float64)


def polyline_length(coords: np.ndarray) -> float:
    d = np.diff(coords, axis=0)
    return float(np.sum(np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])))


def read_edges_csv(path, nodes: dict[str, Point] | None = None) -> list[RawEdge]:
    """Read an edges table with WKT geometry or a declared length.

    When ``nodes`` is given it is authoritative: every endpoint must be a
    known node id, and length-only rows get a straight polyline between
    their endpoint nodes.
    """
    fh, reader, header = _open_csv(path, [("u", "v", "geometry"), ("u", "v", "length")])
    has_geom = header[2] == "geometry"
    if not has_geom and nodes is None:
        fh.close()
        raise ParseError("length-only edges need a nodes table for coordinates", path, "line 1")
    out = []
    with fh:
        for row_no, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != 3:
                raise ParseError(f"expected 3 fields, got {len(rec)}", path, f"row {row_no}")
            u, v = rec[0].strip(), rec[1].strip()
            if not u or not v:
                raise ParseError("empty node id", path, f"row {row_no}")
            if nodes is not None:
                for nid in (u, v):
                    if nid not in nodes:
                        raise ParseError(f"unknown node {nid!r}", path, f"row {row_no}")
            if has_geom:
                try:
                    coords = parse_wkt_linestring(rec[2])
                except ValueError as exc:
                    raise ParseError(f"WKT error: {exc}", path, f"row {row_no}") from None
                length = polyline_length(coords)
            else:
                length = _float_field(rec[2], path, row_no, "length")
                if length < 0:
                    raise ParseError("negative length", path, f"row {row_no}")
                coords = np.array([nodes[u], nodes[v]], dtype=np.float64)
            out.append(RawEdge(u, v, coords, length, self_loop=(u == v), row=row_no))
    return out


# --------------------------------------------------------------------------
# GeoJSON


def _ring(coords, label):
    try:
        arr = np.asarray(coords, dtype=np.float64)
    except (TypeError, ValueError):
        raise InvalidGeometryError(f"{label}: ring coordinates are not numeric") from None
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise InvalidGeometryError(f"{label}: ring must be a list of [x, y] positions")
    arr = np.ascontiguousarray(arr[:, :2])
    if len(arr) < 4 or not np.array_equal(arr[0], arr[-1]):
        raise InvalidGeometryError(f"{label}: ring is not closed")
    if len(np.unique(arr[:-1], axis=0)) < 3:
        raise InvalidGeometryError(f"{label}: ring has fewer than 3 distinct vertices")
    return arr


def read_polygons_geojson(path) -> list[PolygonGeometry]:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path, f"line {exc.lineno}") from None
    if doc.get("type") != "FeatureCollection":
        raise ParseError("expected a FeatureCollection", path)
    out = []
    for fno, feat in enumerate(doc.get("features", []), start=1):
        props = dict(feat.get("properties") or {})
        fid = props.get("id", feat.get("id"))
        if fid is None:
            raise ParseError("feature has no 'id' property", path, f"feature {fno}")
        props["id"] = str(fid)
        label = f"{path}: feature {fno} (id {fid!r})"
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            parts = [geom.get("coordinates", [])]
        elif gtype == "MultiPolygon":
            parts = geom.get("coordinates", [])
        else:
            raise InvalidGeometryError(f"{label}: unsupported geometry type {gtype!r}")
        for part in parts:
            if not part:
                raise InvalidGeometryError(f"{label}: polygon without rings")
            rings = [_ring(r, label) for r in part]
            out.append(PolygonGeometry(rings[0], rings[1:], dict(props)))
    return out


# --------------------------------------------------------------------------
# PPM rendering

# Red -> yellow -> green, decile 1 first.
DECILE_PALETTE = (
    (165, 0, 38),
    (215, 48, 39),
    (244, 109, 67),
    (253, 174, 97),
    (254, 224, 139),
    (217, 239, 139),
    (166, 217, 106),
    (102, 189, 99),
    (26, 152, 80),
    (0, 104, 55),
)
NODATA_RGB = (255, 255, 255)


def render_decile_map(deciles: RasterLayer, path) -> None:
    """Write a binary PPM with one pixel per cell, north row first."""
    g = deciles.grid
    lut = np.array((NODATA_RGB,) + DECILE_PALETTE, dtype=np.uint8)
    vals = deciles.values
    valid = deciles.valid_mask()
    idx = np.zeros(vals.shape, dtype=np.int64)
    labels = np.where(valid, vals, 0.0)
    ok = valid & (labels >= 1) & (labels <= 10) & (labels == np.round(labels))
    if np.any(valid & ~ok):
        raise ValueError("decile map holds labels outside 1..10")
    idx[ok] = labels[ok].astype(np.int64)
    rgb = lut[idx][::-1]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (g.n_cols, g.n_rows))
        fh.write(np.ascontiguousarray(rgb).tobytes())
