"""Stage runners behind the command-line interface.

Every stage reads its inputs from disk and writes its outputs to the
configured output directory, so runs can resume and outputs can be diffed.
``manifest.json`` records the config hash, per-stage timings and a SHA-256
for every output file.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from walkgrid import _backend
from walkgrid import components as comp
from walkgrid import geoio, pednet, smoothing
from walkgrid import spatial_stats as stats
from walkgrid.config import PipelineConfig
from walkgrid.errors import DegenerateFieldError, DegenerateWeightsError, InsufficientDataError, WalkgridError
from walkgrid.fields import KINDS, ComponentField, ComponentKind
from walkgrid.geoio import RasterLayer, fmt_float

log = logging.getLogger(__name__)

ISO_ARRAYS = ("origins", "indptr", "cells", "dists")
MANIFEST = "manifest.json"
ALL_UNIT = "ALL"


class StageFailed(WalkgridError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


# --------------------------------------------------------------------------
# small I/O helpers


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else fmt_float(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_csv_value(v) for v in row])


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_isochrones(iso: pednet.IsochroneSet, directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    for name in ISO_ARRAYS:
        np.save(directory / f"{name}.npy", getattr(iso, name), allow_pickle=False)


def load_isochrones(directory: Path, grid) -> pednet.IsochroneSet:
    arrs = {n: np.load(directory / f"{n}.npy", allow_pickle=False) for n in ISO_ARRAYS}
    return pednet.IsochroneSet(grid, **arrs)


def _read_raster(cfg: PipelineConfig, path: Path, name: str) -> RasterLayer:
    layer = geoio.read_ascii_grid(path)
    if name in ("population", "urbanization", "corine") or path.parent == cfg.output_dir:
        # These must sit exactly on the analysis grid (corine may be larger
        # but aligned; lum_field checks that itself).
        if name != "corine" and layer.grid != cfg.grid:
            raise WalkgridError(f"{path}: raster grid {layer.grid} does not match config grid {cfg.grid}")
    return layer


def _load_graph(cfg: PipelineConfig) -> pednet.PedestrianGraph:
    nodes = geoio.read_nodes_csv(cfg.inputs["nodes"])
    edges = geoio.read_edges_csv(cfg.inputs["edges"], nodes)
    return pednet.build_graph(nodes, edges)


def _units(cfg: PipelineConfig, key: str):
    path = cfg.inputs.get(key)
    if path is None:
        return None
    return geoio.read_polygons_geojson(path)


def _safe_name(uid: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", uid) or "_"


# --------------------------------------------------------------------------
# stage definitions


def out(cfg: PipelineConfig, name: str) -> Path:
    return cfg.output_dir / name


def components_outputs(cfg):
    return [out(cfg, f"raw_{k.value}.asc") for k in KINDS] + [
        out(cfg, f"isochrones/{n}.npy") for n in ISO_ARRAYS
    ]


def index_outputs(cfg):
    return (
        [out(cfg, f"smooth_{k.value}.asc") for k in KINDS]
        + [out(cfg, f"z_{k.value}.asc") for k in KINDS]
        + [out(cfg, "index.asc"), out(cfg, "deciles.asc"), out(cfg, "norm_stats.csv")]
    )


def aggregate_outputs(cfg):
    return [out(cfg, n) for n in ("aggregates.csv", "strata.csv", "cdf.csv", "corr.csv", "below_decile.csv")]


def moran_outputs(cfg):
    return [out(cfg, "moran.csv")]


def render_outputs(cfg):
    return [out(cfg, "deciles.ppm")]


def cmd_components(cfg: PipelineConfig, threads: int | None = None) -> dict:
    threads = threads or cfg.threads
    graph = _load_graph(cfg)
    inputs = comp.ComponentInputs(
        graph=graph,
        ndvi=geoio.read_ascii_grid(cfg.inputs["ndvi"]),
        dem=geoio.read_ascii_grid(cfg.inputs["dem"]),
        corine=geoio.read_ascii_grid(cfg.inputs["corine"]),
        green=geoio.read_polygons_geojson(cfg.inputs["green"]),
        stops=geoio.read_points_csv(cfg.inputs["stops"]),
    )
    fields, iso = comp.compute_components(
        inputs, cfg.grid, cfg.iso, cfg.lum_radius, cfg.supersample, threads=threads
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    for kind in KINDS:
        geoio.write_ascii_grid(fields[kind].values, out(cfg, f"raw_{kind.value}.asc"))
    save_isochrones(iso, out(cfg, "isochrones"))
    return {
        "nodes": graph.n_nodes,
        "edges": len(graph.edges),
        "isochrone_origins": int(len(iso)),
        "isochrone_entries": int(iso.indptr[-1]),
    }


def _domain_mask(cfg: PipelineConfig):
    if cfg.zscore_domain is None:
        return None
    layer = geoio.read_ascii_grid(cfg.zscore_domain)
    if layer.grid != cfg.grid:
        raise WalkgridError("zscore.domain mask is not on the config grid")
    return layer.valid_mask() & (np.where(layer.valid_mask(), layer.values, 0.0) != 0.0)


def cmd_index(cfg: PipelineConfig, threads: int | None = None, allow_degenerate: bool = False) -> dict:
    threads = threads or cfg.threads
    grid = cfg.grid
    iso = load_isochrones(out(cfg, "isochrones"), grid)
    pop = _read_raster(cfg, cfg.inputs["population"], "population") if cfg.per_capita else None
    mask = _domain_mask(cfg)
    zs, stats_rows = {}, []
    for kind in KINDS:
        raw = ComponentField(kind, _read_raster(cfg, out(cfg, f"raw_{kind.value}.asc"), "raw"))
        if cfg.per_capita and kind in comp.PER_CAPITA_KINDS:
            raw = comp.per_capita(raw, pop)
        sm = smoothing.smooth_component(raw, iso, cfg.decay, threads=threads)
        geoio.write_ascii_grid(sm.values, out(cfg, f"smooth_{kind.value}.asc"))
        try:
            z, ns = smoothing.zscore(sm, mask, allow_degenerate=allow_degenerate)
        except DegenerateFieldError as exc:
            raise DegenerateFieldError(
                f"component {kind.value} is constant after smoothing; rerun with "
                f"--allow-degenerate to use z = 0 ({exc})"
            ) from None
        geoio.write_ascii_grid(z.values, out(cfg, f"z_{kind.value}.asc"))
        zs[kind] = z
        stats_rows.append((kind.value, ns.mean, ns.std, ns.degenerate))
    index = smoothing.compose_index(zs, cfg.weights)
    dec = smoothing.deciles(index)
    geoio.write_ascii_grid(index, out(cfg, "index.asc"))
    geoio.write_ascii_grid(dec, out(cfg, "deciles.asc"))
    write_csv(out(cfg, "norm_stats.csv"), ["kind", "mean", "std", "degenerate"], stats_rows)
    return {"index_cells": int(index.valid_mask().sum())}


def cmd_aggregate(cfg: PipelineConfig, threads: int | None = None) -> dict:
    grid = cfg.grid
    pop = _read_raster(cfg, cfg.inputs["population"], "population")
    smoothed = {k: _read_raster(cfg, out(cfg, f"smooth_{k.value}.asc"), "smooth") for k in KINDS}
    index = _read_raster(cfg, out(cfg, "index.asc"), "index")
    dec = _read_raster(cfg, out(cfg, "deciles.asc"), "deciles")
    polys = _units(cfg, "admin")
    if polys is None:
        units = {ALL_UNIT: np.arange(grid.n_cells)}
        records = [stats.AggregateRecord(
            ALL_UNIT,
            {k: stats.pop_weighted_mean(f, pop, units[ALL_UNIT]) for k, f in smoothed.items()},
            stats.pop_weighted_mean(index, pop, units[ALL_UNIT]),
            stats._population(pop, units[ALL_UNIT]),
            grid.n_cells,
        )]
    else:
        units = stats.group_polygons(polys, grid)
        records = stats.aggregate_polygons(smoothed, index, pop, polys, grid)

    write_csv(
        out(cfg, "aggregates.csv"),
        ["unit_id", *[f"{k.value}_pw_mean" for k in KINDS], "index_pw_mean", "population", "cell_count"],
        [[r.unit_id, *[r.means[k] for k in KINDS], r.index_pw_mean, r.population, r.cell_count]
         for r in records],
    )

    names = [k.value for k in KINDS] + ["WALK"]
    if len(records) >= 3:
        cm = stats.corr_matrix(records, KINDS)
        matrix = cm.values
    else:
        log.warning("correlation matrix needs >= 3 units, got %d; writing empty matrix", len(records))
        matrix = np.full((len(names), len(names)), np.nan)
    write_csv(out(cfg, "corr.csv"), ["variable", *names],
              [[n, *matrix[i].tolist()] for i, n in enumerate(names)])

    strata_rows = []
    urb_path = cfg.inputs.get("urbanization")
    if urb_path is not None:
        urb = _read_raster(cfg, urb_path, "urbanization")
        scopes = [(ALL_UNIT, None)] + [(u, c) for u, c in units.items() if u != ALL_UNIT]
        for uid, cells in scopes:
            for s in stats.stratify_by_urbanization(index, pop, urb, grid, dec, cells=cells):
                strata_rows.append([uid, int(s.urban_class), s.urban_class.name.lower(), s.cell_count,
                                    s.population, s.pop_share, s.pw_mean, *s.decile_population])
    write_csv(
        out(cfg, "strata.csv"),
        ["unit_id", "class", "class_name", "cell_count", "population", "pop_share",
         "index_pw_mean", *[f"pop_d{k}" for k in range(1, 11)]],
        strata_rows,
    )

    curve = stats.pop_weighted_cdf(index, pop) or []
    write_csv(out(cfg, "cdf.csv"), ["value", "cum_pop_share"], curve)

    below = [(ALL_UNIT, stats.pct_below_decile(dec, pop, None, cfg.decile_threshold))]
    below += [(u, stats.pct_below_decile(dec, pop, c, cfg.decile_threshold))
              for u, c in units.items() if u != ALL_UNIT]
    write_csv(out(cfg, "below_decile.csv"), ["unit_id", f"pct_below_decile_{cfg.decile_threshold}"], below)
    return {"units": len(records)}


def moran_for_units(index: RasterLayer, units: dict, grid, scheme: str) -> list:
    rows = []
    for uid, cells in units.items():
        try:
            if len(cells) == 0:
                raise InsufficientDataError("unit contains no cells")
            w = stats.build_spatial_weights(cells, grid, scheme)
            r = stats.morans_i(index, w)
        except (DegenerateFieldError, DegenerateWeightsError, InsufficientDataError) as exc:
            log.warning("Moran's I undefined for unit %s: %s", uid, exc)
            rows.append([uid, None, None, None])
            continue
        rows.append([uid, r.I, r.N, r.W])
    return rows


def cmd_moran(cfg: PipelineConfig, threads: int | None = None) -> dict:
    grid = cfg.grid
    index = _read_raster(cfg, out(cfg, "index.asc"), "index")
    polys = _units(cfg, "moran_units")
    units = {ALL_UNIT: np.arange(grid.n_cells)} if polys is None else stats.group_polygons(polys, grid)
    rows = moran_for_units(index, units, grid, cfg.moran_scheme)
    write_csv(out(cfg, "moran.csv"), ["unit_id", "I", "N", "W"], rows)
    return {"moran_units": len(rows)}


def cmd_render(cfg: PipelineConfig, threads: int | None = None) -> dict:
    grid = cfg.grid
    dec = _read_raster(cfg, out(cfg, "deciles.asc"), "deciles")
    geoio.render_decile_map(dec, out(cfg, "deciles.ppm"))
    polys = _units(cfg, "moran_units")
    n_maps = 0
    if polys is not None:
        maps = out(cfg, "maps")
        maps.mkdir(exist_ok=True)
        for uid, cells in stats.group_polygons(polys, grid).items():
            if len(cells) == 0:
                continue
            rows, cols = np.divmod(cells, grid.n_cols)
            r0, r1, c0, c1 = rows.min(), rows.max() + 1, cols.min(), cols.max() + 1
            sub = type(grid)(grid.origin_x + c0 * grid.cell_size, grid.origin_y + r0 * grid.cell_size,
                             grid.cell_size, int(r1 - r0), int(c1 - c0))
            inside = np.zeros(grid.shape, dtype=bool)
            inside.flat[cells] = True
            keep = (inside & dec.valid_mask())[r0:r1, c0:c1]
            crop = RasterLayer.from_masked(sub, dec.values[r0:r1, c0:c1], keep, dec.nodata)
            geoio.render_decile_map(crop, maps / f"{_safe_name(uid)}.ppm")
            n_maps += 1
    return {"maps": n_maps}


@dataclass
class Stage:
    name: str
    run: object
    inputs: object
    outputs: object


def _cfg_inputs(*keys):
    def f(cfg):
        paths = [cfg.inputs[k] for k in keys if cfg.inputs.get(k) is not None]
        if cfg.zscore_domain is not None and "population" in keys:
            paths.append(cfg.zscore_domain)
        return paths
    return f


STAGES = [
    Stage("components", cmd_components,
          _cfg_inputs("nodes", "edges", "ndvi", "dem", "corine", "green", "stops"), components_outputs),
    Stage("index", cmd_index,
          lambda cfg: components_outputs(cfg) + _cfg_inputs("population")(cfg), index_outputs),
    Stage("aggregate", cmd_aggregate,
          lambda cfg: index_outputs(cfg) + _cfg_inputs("population", "admin", "urbanization")(cfg),
          aggregate_outputs),
    Stage("moran", cmd_moran,
          lambda cfg: [out(cfg, "index.asc")] + _cfg_inputs("moran_units")(cfg), moran_outputs),
    Stage("render", cmd_render,
          lambda cfg: [out(cfg, "deciles.asc")] + _cfg_inputs("moran_units")(cfg), render_outputs),
]
STAGE_NAMES = [s.name for s in STAGES]


# --------------------------------------------------------------------------
# manifest and orchestration


def load_manifest(cfg: PipelineConfig) -> dict:
    p = out(cfg, MANIFEST)
    if p.exists():
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError:
            log.warning("ignoring unreadable manifest %s", p)
    return {"stages": {}}


def write_manifest(cfg: PipelineConfig, manifest: dict):
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    manifest["config_hash"] = cfg.config_hash()
    manifest["backend"] = _backend.BACKEND
    manifest["grid"] = {"n_rows": cfg.grid.n_rows, "n_cols": cfg.grid.n_cols,
                        "cell_size": cfg.grid.cell_size, "n_cells": cfg.grid.n_cells}
    p = out(cfg, MANIFEST)
    p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _output_files(cfg, stage: Stage) -> list[Path]:
    files = list(stage.outputs(cfg))
    if stage.name == "render" and out(cfg, "maps").is_dir():
        files += sorted(out(cfg, "maps").glob("*.ppm"))
    return files


def _options_key(stage_name: str, allow_degenerate: bool) -> str:
    return f"allow_degenerate={allow_degenerate}" if stage_name == "index" else ""


def is_fresh(cfg: PipelineConfig, stage: Stage, manifest: dict, allow_degenerate: bool) -> bool:
    entry = manifest.get("stages", {}).get(stage.name)
    if not entry or entry.get("config_hash") != cfg.config_hash():
        return False
    if entry.get("options", "") != _options_key(stage.name, allow_degenerate):
        return False
    outs = stage.outputs(cfg)
    if not all(p.exists() for p in outs):
        return False
    ins = [p for p in stage.inputs(cfg) if p.exists()]
    newest_in = max((p.stat().st_mtime_ns for p in ins), default=0)
    oldest_out = min(p.stat().st_mtime_ns for p in outs)
    return oldest_out >= newest_in


def run_stage(cfg: PipelineConfig, stage: Stage, manifest: dict, threads=None,
              allow_degenerate=False) -> dict:
    t0 = time.perf_counter()
    kwargs = {"threads": threads}
    if stage.name == "index":
        kwargs["allow_degenerate"] = allow_degenerate
    try:
        counts = stage.run(cfg, **kwargs)
    except WalkgridError as exc:
        raise StageFailed(stage.name, exc) from exc
    except OSError as exc:
        raise StageFailed(stage.name, exc) from exc
    entry = {
        "status": "ran",
        "seconds": round(time.perf_counter() - t0, 3),
        "config_hash": cfg.config_hash(),
        "options": _options_key(stage.name, allow_degenerate),
        "counts": counts,
        "outputs": {
            str(p.relative_to(cfg.output_dir)): sha256_file(p) for p in _output_files(cfg, stage)
        },
    }
    manifest.setdefault("stages", {})[stage.name] = entry
    write_manifest(cfg, manifest)
    return entry


def run_single(cfg: PipelineConfig, name: str, threads=None, allow_degenerate=False) -> dict:
    cfg.validate()
    stage = STAGES[STAGE_NAMES.index(name)]
    manifest = load_manifest(cfg)
    return run_stage(cfg, stage, manifest, threads, allow_degenerate)


def cmd_pipeline(cfg: PipelineConfig, threads=None, force=False, allow_degenerate=False) -> dict:
    """Run every stage in dependency order, skipping fresh ones unless ``force``."""
    cfg.validate()
    manifest = load_manifest(cfg)
    report = {}
    for stage in STAGES:
        if not force and is_fresh(cfg, stage, manifest, allow_degenerate):
            log.info("stage %s is up to date; skipped", stage.name)
            manifest["stages"][stage.name]["status"] = "skipped"
            report[stage.name] = "skipped"
            continue
        log.info("running stage %s", stage.name)
        entry = run_stage(cfg, stage, manifest, threads, allow_degenerate)
        log.info("stage %s done in %.2fs", stage.name, entry["seconds"])
        report[stage.name] = "ran"
    write_manifest(cfg, manifest)
    return report
