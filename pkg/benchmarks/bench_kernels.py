"""Compare the compiled kernels with the numpy/scipy fallback.

Usage::

    python benchmarks/bench_kernels.py [--size 200] [--repeat 3]

Each kernel runs on the same synthetic city with both backends. The table
reports the best wall time of ``--repeat`` runs and the speed-up.
"""
from __future__ import annotations

import argparse
import tempfile
import time

import numpy as np

from walkgrid import _backend, pipeline
from walkgrid.config import load_config
from walkgrid.fields import ComponentField, ComponentKind
from walkgrid.geoio import RasterLayer
from walkgrid.pednet import clip_walk_length, compute_isochrones
from walkgrid.smoothing import smooth_component
from walkgrid.synthetic import write_city


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=200, help="grid side in cells")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    try:
        _backend.get_kernels("cython")
        backends = ["cython", "python"]
    except ImportError:
        print("compiled kernels not built; timing the python fallback only")
        backends = ["python"]

    with tempfile.TemporaryDirectory() as tmp:
        cfg = load_config(write_city(tmp, size=args.size, seed=7))
        graph = pipeline._load_graph(cfg)
        grid = cfg.grid
        iso = compute_isochrones(graph, grid, cfg.iso, threads=args.threads)
        rng = np.random.default_rng(0)
        raw = ComponentField(ComponentKind.NDVI, RasterLayer(grid, rng.random(grid.shape)))
        cases = {
            "isochrones": lambda b: compute_isochrones(graph, grid, cfg.iso, threads=args.threads, backend=b),
            "smoothing": lambda b: smooth_component(raw, iso, cfg.decay, threads=args.threads, backend=b),
            "edge clipping": lambda b: clip_walk_length(graph, grid, backend=b),
        }
        print(f"grid {grid.n_rows}x{grid.n_cols}, {graph.n_nodes} nodes, "
              f"{len(iso.cells)} reach pairs, {args.threads} thread(s)")
        print(f"{'kernel':<15}" + "".join(f"{b:>12}" for b in backends) + ("     speed-up" if len(backends) == 2 else ""))
        for name, fn in cases.items():
            t = [best_of(lambda: fn(b), args.repeat) for b in backends]
            row = f"{name:<15}" + "".join(f"{s:>11.3f}s" for s in t)
            if len(t) == 2:
                row += f"{t[1] / t[0]:>12.1f}x"
            print(row)


if __name__ == "__main__":
    main()
