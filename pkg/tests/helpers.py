"""Shared builders for synthetic test inputs."""
import numpy as np

from walkgrid.pednet import IsochroneSet


def random_isochrones(rng, grid, p_origin=0.8, max_reach=40, max_dist=1300.0):
    """IsochroneSet with random sorted reach lists; origin always at distance 0."""
    origins = np.flatnonzero(rng.random(grid.n_cells) < p_origin)
    rows_c, rows_d = [], []
    for o in origins:
        k = int(rng.integers(0, max_reach))
        others = rng.choice(grid.n_cells, size=min(k, grid.n_cells), replace=False)
        cells = np.unique(np.append(others, o))
        d = rng.uniform(0, max_dist, cells.size)
        d[cells == o] = 0.0
        rows_c.append(cells)
        rows_d.append(d)
    indptr = np.zeros(len(origins) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(c) for c in rows_c])
    cells = np.concatenate(rows_c) if rows_c else np.empty(0, np.int64)
    dists = np.concatenate(rows_d) if rows_d else np.empty(0)
    return IsochroneSet(grid, origins.astype(np.int64), indptr, cells.astype(np.int64), dists)


def reach_dict(iso):
    out = {}
    for i, o in enumerate(iso.origins.tolist()):
        lo, hi = iso.indptr[i], iso.indptr[i + 1]
        out[o] = dict(zip(iso.cells[lo:hi].tolist(), iso.dists[lo:hi].tolist()))
    return out
