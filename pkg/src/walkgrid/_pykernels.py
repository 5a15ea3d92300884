"""Pure-Python/numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures and return types. Arithmetic is ordered the same way so that
counts, reach sets and polygon membership agree exactly; floating sums agree
to rounding.
"""
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


def points_in_rings(xs, ys, coords, ring_ptr):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = np.zeros(xs.shape[0], dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for r in range(len(ring_ptr) - 1):
            for j in range(ring_ptr[r], ring_ptr[r + 1] - 1):
                xi, yi = coords[j]
                xj, yj = coords[j + 1]
                crosses = (yi > ys) != (yj > ys)
                if not crosses.any():
                    continue
                x_at = (xj - xi) * (ys - yi) / (yj - yi) + xi
                inside ^= crosses & (xs < x_at)
    return inside.astype(np.uint8)


def clip_polylines(coords, line_ptr, scale, ox, oy, s, n_rows, n_cols):
    out = np.zeros(n_rows * n_cols, dtype=np.float64)
    floor = math.floor
    for li in range(len(line_ptr) - 1):
        sc = float(scale[li])
        pts = coords[line_ptr[li]:line_ptr[li + 1]].tolist()
        for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
            dx = bx - ax
            dy = by - ay
            seglen = math.sqrt(dx * dx + dy * dy)
            if seglen == 0.0:
                continue
            ts = [0.0, 1.0]
            if dx != 0.0:
                lo, hi = sorted(((ax - ox) / s, (bx - ox) / s))
                for k in range(floor(lo) + 1, math.ceil(hi)):
                    t = ((ox + k * s) - ax) / dx
                    if 0.0 < t < 1.0:
                        ts.append(t)
            if dy != 0.0:
                lo, hi = sorted(((ay - oy) / s, (by - oy) / s))
                for k in range(floor(lo) + 1, math.ceil(hi)):
                    t = ((oy + k * s) - ay) / dy
                    if 0.0 < t < 1.0:
                        ts.append(t)
            ts.sort()
            for t0, t1 in zip(ts[:-1], ts[1:]):
                if t1 <= t0:
                    continue
                tm = 0.5 * (t0 + t1)
                fc = floor(((ax + tm * dx) - ox) / s)
                fr = floor(((ay + tm * dy) - oy) / s)
                if 0 <= fc < n_cols and 0 <= fr < n_rows:
                    out[fr * n_cols + fc] += (t1 - t0) * seglen * sc
    return out


_BATCH_CELLS = 1 << 22


def isochrone_groups(g_ptr, g_nbr, g_w, nc_ptr, nc_cell, nc_snap,
                     grp_node, grp_ptr, o_cell, o_snap, limit):
    n_nodes = len(g_ptr) - 1
    graph = csr_matrix((g_w, g_nbr, g_ptr), shape=(n_nodes, n_nodes))
    counts = np.zeros(len(o_cell), dtype=np.int64)
    cells_out = []
    dists_out = []
    batch = max(1, _BATCH_CELLS // max(n_nodes, 1))
    for b0 in range(0, len(grp_node), batch):
        sources = np.asarray(grp_node[b0:b0 + batch])
        dist = dijkstra(graph, directed=True, indices=sources, limit=limit)
        dist = np.atleast_2d(dist)
        for k in range(len(sources)):
            gi = b0 + k
            row = dist[k]
            reached = np.flatnonzero(np.isfinite(row))
            starts = nc_ptr[reached]
            lens = nc_ptr[reached + 1] - starts
            total = int(lens.sum())
            owner = np.repeat(np.arange(len(reached)), lens)
            offs = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
            idx = np.repeat(starts, lens) + offs
            cand_cells = np.asarray(nc_cell)[idx]
            cand_snap = np.asarray(nc_snap)[idx]
            d_node = row[reached][owner]
            for oi in range(grp_ptr[gi], grp_ptr[gi + 1]):
                origin = o_cell[oi]
                t = (o_snap[oi] + d_node) + cand_snap
                keep = t <= limit
                c = cand_cells[keep]
                t = t[keep]
                t[c == origin] = 0.0
                if not (c == origin).any():
                    c = np.append(c, origin)
                    t = np.append(t, 0.0)
                order = np.argsort(c, kind="stable")
                cells_out.append(c[order])
                dists_out.append(t[order])
                counts[oi] = len(c)
    if cells_out:
        cells = np.concatenate(cells_out).astype(np.int64)
        dists = np.concatenate(dists_out).astype(np.float64)
    else:
        cells = np.empty(0, dtype=np.int64)
        dists = np.empty(0, dtype=np.float64)
    return counts, cells, dists


def smooth_csr(indptr, cells, dists, values, valid, sigma):
    n = len(indptr) - 1
    row = np.repeat(np.arange(n), np.diff(indptr))
    use = valid[cells].astype(bool)
    row = row[use]
    d = dists[use]
    w = np.exp(-(d * d) / (2.0 * sigma * sigma))
    num = np.bincount(row, weights=w * values[cells[use]], minlength=n)
    den = np.bincount(row, weights=w, minlength=n)
    ok = den > 0.0
    out = np.zeros(n, dtype=np.float64)
    out[ok] = num[ok] / den[ok]
    return out, ok.astype(np.uint8)
