"""Seeded synthetic city used by tests, benchmarks and the acceptance suite.

The city is a jittered street lattice with gaps, some kinked streets and a
few long rural roads, surrounded by farmland. Every input layer the pipeline
needs is generated from the same seed, so the files are reproducible bit for
bit.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from walkgrid.geoio import RasterLayer, write_ascii_grid
from walkgrid.grid import GridSpec


def _fmt(v: float) -> str:
    return repr(round(float(v), 2))


def _lattice_defaults(size: int):
    if size <= 400:
        return 80, 150.0
    return 166, 100.0


def make_network(grid: GridSpec, rng, lattice_n: int, spacing: float,
                 drop: float = 0.08, kink: float = 0.1, rural_roads: int = 6):
    """Nodes ``{id: (x, y)}`` and edges ``[(u, v, coords)]``."""
    cx = grid.origin_x + grid.n_cols * grid.cell_size / 2
    cy = grid.origin_y + grid.n_rows * grid.cell_size / 2
    x0 = cx - (lattice_n - 1) * spacing / 2
    y0 = cy - (lattice_n - 1) * spacing / 2
    nodes: dict[str, tuple[float, float]] = {}
    jitter = rng.uniform(-0.15 * spacing, 0.15 * spacing, size=(lattice_n, lattice_n, 2))
    for i in range(lattice_n):
        for j in range(lattice_n):
            nodes[f"{i * lattice_n + j}"] = (x0 + j * spacing + jitter[i, j, 0],
                                             y0 + i * spacing + jitter[i, j, 1])
    edges = []

    def add(u, v):
        a, b = np.array(nodes[u]), np.array(nodes[v])
        if rng.random() < kink:
            mid = (a + b) / 2 + rng.uniform(-0.2 * spacing, 0.2 * spacing, size=2)
            coords = np.array([a, mid, b])
        else:
            coords = np.array([a, b])
        edges.append((u, v, coords))

    for i in range(lattice_n):
        for j in range(lattice_n):
            u = f"{i * lattice_n + j}"
            if j + 1 < lattice_n and rng.random() >= drop:
                add(u, f"{i * lattice_n + j + 1}")
            if i + 1 < lattice_n and rng.random() >= drop:
                add(u, f"{(i + 1) * lattice_n + j}")

    # Rural roads: chains of degree-2 nodes from a lattice corner region
    # towards the grid border.
    xmin, ymin, xmax, ymax = grid.extent
    nid = lattice_n * lattice_n
    for k in range(rural_roads):
        ang = 2 * math.pi * (k + rng.uniform(0.2, 0.8)) / rural_roads
        start = f"{int(rng.integers(lattice_n * lattice_n))}"
        sx, sy = nodes[start]
        # distance to the border along the ray, minus a margin
        t_max = min(
            ((xmax - sx) / math.cos(ang)) if math.cos(ang) > 1e-9 else math.inf,
            ((xmin - sx) / math.cos(ang)) if math.cos(ang) < -1e-9 else math.inf,
            ((ymax - sy) / math.sin(ang)) if math.sin(ang) > 1e-9 else math.inf,
            ((ymin - sy) / math.sin(ang)) if math.sin(ang) < -1e-9 else math.inf,
        ) - grid.cell_size
        prev = start
        t = 0.0
        while t + 300.0 < t_max:
            t += float(rng.uniform(200.0, 400.0))
            t = min(t, t_max)
            p = (sx + t * math.cos(ang) + rng.uniform(-20, 20), sy + t * math.sin(ang) + rng.uniform(-20, 20))
            cur = f"{nid}"
            nid += 1
            nodes[cur] = p
            edges.append((prev, cur, np.array([nodes[prev], p])))
            prev = cur
    return nodes, edges


def _radial(grid: GridSpec, scale_m: float):
    """exp(-r^2 / 2 s^2) of each cell centre around the grid centre."""
    xs = grid.origin_x + (np.arange(grid.n_cols) + 0.5) * grid.cell_size
    ys = grid.origin_y + (np.arange(grid.n_rows) + 0.5) * grid.cell_size
    cx = grid.origin_x + grid.n_cols * grid.cell_size / 2
    cy = grid.origin_y + grid.n_rows * grid.cell_size / 2
    X, Y = np.meshgrid(xs - cx, ys - cy)
    return np.exp(-(X * X + Y * Y) / (2 * scale_m * scale_m)), np.hypot(X, Y)


def make_population(grid: GridSpec, rng, city_radius: float):
    dens, _ = _radial(grid, city_radius / 2)
    pop = rng.poisson(250.0 * dens + 0.3).astype(np.float64)
    return pop


def urbanization_from_population(pop: np.ndarray) -> np.ndarray:
    bounds = [0.5, 3, 10, 30, 80, 150]  # residents per hectare
    return (np.digitize(pop, bounds) + 1).astype(np.float64)


def make_ndvi(grid: GridSpec, rng, factor: int, city_radius: float) -> RasterLayer:
    fine = GridSpec(grid.origin_x, grid.origin_y, grid.cell_size / factor,
                    grid.n_rows * factor, grid.n_cols * factor)
    dens, _ = _radial(fine, city_radius / 2)
    base = 0.75 - 0.6 * dens + rng.normal(0.0, 0.08, size=fine.shape)
    vals = np.clip(base, -0.2, 0.95)
    valid = np.ones(fine.shape, dtype=bool)
    # a lake of nodata pixels in the south-west quadrant
    r0, c0 = fine.n_rows // 5, fine.n_cols // 5
    rad = max(2, fine.n_rows // 25)
    rr, cc = np.ogrid[:fine.n_rows, :fine.n_cols]
    valid &= (rr - r0) ** 2 + (cc - c0) ** 2 > rad * rad
    return RasterLayer.from_masked(fine, vals, valid)


def make_dem(grid: GridSpec, rng, cell: float = 50.0) -> RasterLayer:
    f = int(round(grid.cell_size / cell))
    fine = GridSpec(grid.origin_x, grid.origin_y, cell, grid.n_rows * f, grid.n_cols * f)
    ys = (np.arange(fine.n_rows) + 0.5) * cell
    xs = (np.arange(fine.n_cols) + 0.5) * cell
    X, Y = np.meshgrid(xs, ys)
    ph = rng.uniform(0, 2 * math.pi, size=3)
    z = (120.0
         + 40.0 * np.sin(X / 2300.0 + ph[0]) * np.cos(Y / 1700.0 + ph[1])
         + 15.0 * np.sin((X + Y) / 700.0 + ph[2])
         + rng.normal(0.0, 0.5, size=fine.shape))
    return RasterLayer(fine, z)


def make_corine(grid: GridSpec, rng, city_radius: float) -> RasterLayer:
    _, r = _radial(grid, 1.0)
    u = rng.random(grid.shape)
    core = np.where(u < 0.5, 111, np.where(u < 0.8, 121, np.where(u < 0.9, 122, 141)))
    inner = np.where(u < 0.55, 112, np.where(u < 0.7, 121, np.where(u < 0.85, 141, 142)))
    outer = np.where(u < 0.45, 211, np.where(u < 0.7, 311, np.where(u < 0.85, 321, np.where(u < 0.95, 231, 512))))
    codes = np.where(r < 0.3 * city_radius, core, np.where(r < city_radius, inner, outer))
    return RasterLayer(grid, codes.astype(np.float64))


def _rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]


def _circle(cx, cy, r, n=24):
    pts = [[cx + r * math.cos(2 * math.pi * k / n), cy + r * math.sin(2 * math.pi * k / n)] for k in range(n)]
    return [[round(x, 3), round(y, 3)] for x, y in pts] + [[round(pts[0][0], 3), round(pts[0][1], 3)]]


def make_green(grid: GridSpec, rng, city_radius: float, n_parks: int = 12) -> dict:
    cx = grid.origin_x + grid.n_cols * grid.cell_size / 2
    cy = grid.origin_y + grid.n_rows * grid.cell_size / 2
    feats = []
    for k in range(n_parks):
        a = rng.uniform(0, 2 * math.pi)
        d = rng.uniform(0, city_radius)
        px, py = cx + d * math.cos(a), cy + d * math.sin(a)
        if k % 2:
            w, h = rng.uniform(80, 400, size=2)
            ring = _rect(round(px, 3), round(py, 3), round(px + w, 3), round(py + h, 3))
        else:
            ring = _circle(px, py, rng.uniform(60, 300))
        feats.append({"type": "Feature", "properties": {"id": f"park{k}"},
                      "geometry": {"type": "Polygon", "coordinates": [ring]}})
    # a park with a pond (hole) and a park split in two parts
    feats.append({"type": "Feature", "properties": {"id": "central"},
                  "geometry": {"type": "Polygon", "coordinates": [
                      _rect(cx - 500, cy - 300, cx + 500, cy + 300), _circle(cx, cy, 150)]}})
    feats.append({"type": "Feature", "properties": {"id": "riverside"},
                  "geometry": {"type": "MultiPolygon", "coordinates": [
                      [_rect(cx - 2000, cy + 900, cx - 1200, cy + 1100)],
                      [_rect(cx + 1200, cy - 1100, cx + 2000, cy - 900)]]}})
    return {"type": "FeatureCollection", "features": feats}


def make_admin(grid: GridSpec, parts: int = 3) -> dict:
    xmin, ymin, xmax, ymax = grid.extent
    feats = []
    for i in range(parts):
        for j in range(parts):
            x0 = xmin + (xmax - xmin) * j / parts
            x1 = xmin + (xmax - xmin) * (j + 1) / parts
            y0 = ymin + (ymax - ymin) * i / parts
            y1 = ymin + (ymax - ymin) * (i + 1) / parts
            feats.append({"type": "Feature", "properties": {"id": f"D{i}{j}"},
                          "geometry": {"type": "Polygon", "coordinates": [_rect(x0, y0, x1, y1)]}})
    return {"type": "FeatureCollection", "features": feats}


def make_stops(nodes: dict, rng, share: float = 0.06):
    ids = sorted(nodes, key=int)
    pick = rng.random(len(ids)) < share
    out = []
    for nid, p in zip(ids, pick):
        if p:
            x, y = nodes[nid]
            out.append((x + rng.uniform(-15, 15), y + rng.uniform(-15, 15),
                        "tram" if rng.random() < 0.3 else "bus"))
    return out


def write_city(out_dir, size: int = 200, seed: int = 7, lattice_n: int | None = None,
               spacing: float | None = None, ndvi_factor: int | None = None,
               output_dir: str = "out") -> Path:
    """Write every input layer plus ``walkgrid.cfg``; return the config path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    grid = GridSpec(0.0, 0.0, 100.0, size, size)
    dn, ds = _lattice_defaults(size)
    lattice_n = lattice_n or dn
    spacing = spacing or ds
    if ndvi_factor is None:
        ndvi_factor = 4 if size <= 400 else 2
    city_radius = 0.5 * lattice_n * spacing

    nodes, edges = make_network(grid, rng, lattice_n, spacing)
    with open(out_dir / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x", "y"])
        for nid, (x, y) in nodes.items():
            w.writerow([nid, _fmt(x), _fmt(y)])
    with open(out_dir / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "v", "geometry"])
        for u, v, coords in edges:
            # endpoints are written from the node table so they match exactly
            pts = [nodes[u], *coords[1:-1].tolist(), nodes[v]]
            w.writerow([u, v, "LINESTRING (" + ", ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in pts) + ")"])

    pop = make_population(grid, rng, city_radius)
    write_ascii_grid(RasterLayer(grid, pop), out_dir / "population.asc")
    write_ascii_grid(RasterLayer(grid, urbanization_from_population(pop)), out_dir / "urbanization.asc")
    write_ascii_grid(make_ndvi(grid, rng, ndvi_factor, city_radius), out_dir / "ndvi.asc")
    write_ascii_grid(make_dem(grid, rng), out_dir / "dem.asc")
    write_ascii_grid(make_corine(grid, rng, city_radius), out_dir / "corine.asc")
    (out_dir / "green.geojson").write_text(json.dumps(make_green(grid, rng, city_radius)))
    (out_dir / "admin.geojson").write_text(json.dumps(make_admin(grid)))
    with open(out_dir / "stops.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "category"])
        for x, y, cat in make_stops(nodes, rng):
            w.writerow([_fmt(x), _fmt(y), cat])

    cfg = out_dir / "walkgrid.cfg"
    cfg.write_text("\n".join([
        f"# synthetic city, seed {seed}",
        "input.nodes = nodes.csv",
        "input.edges = edges.csv",
        "input.ndvi = ndvi.asc",
        "input.dem = dem.asc",
        "input.corine = corine.asc",
        "input.population = population.asc",
        "input.urbanization = urbanization.asc",
        "input.green = green.geojson",
        "input.stops = stops.csv",
        "input.admin = admin.geojson",
        f"grid.origin_x = {grid.origin_x}",
        f"grid.origin_y = {grid.origin_y}",
        f"grid.cell_size = {grid.cell_size}",
        f"grid.n_rows = {grid.n_rows}",
        f"grid.n_cols = {grid.n_cols}",
        f"output.dir = {output_dir}",
        "",
    ]))
    return cfg
