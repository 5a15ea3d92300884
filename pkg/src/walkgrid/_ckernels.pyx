# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled inner loops. ``walkgrid._pykernels`` mirrors every function here."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor, ceil, sqrt, INFINITY
from libc.stdint cimport int64_t, uint8_t
from libcpp.vector cimport vector
from libcpp.pair cimport pair
from libcpp.queue cimport priority_queue
from libcpp.algorithm cimport sort

cnp.import_array()

ctypedef pair[double, int64_t] HeapItem
ctypedef pair[int64_t, double] CellDist


def points_in_rings(const double[::1] xs, const double[::1] ys,
                    const double[:, ::1] coords, const int64_t[::1] ring_ptr):
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t n_rings = ring_ptr.shape[0] - 1
    out_arr = np.zeros(n, dtype=np.uint8)
    cdef uint8_t[::1] out = out_arr
    cdef Py_ssize_t p, r, j
    cdef double px, py, xi, yi, xj, yj
    cdef uint8_t inside
    with nogil:
        for p in range(n):
            px = xs[p]
            py = ys[p]
            inside = 0
            for r in range(n_rings):
                for j in range(ring_ptr[r], ring_ptr[r + 1] - 1):
                    xi = coords[j, 0]
                    yi = coords[j, 1]
                    xj = coords[j + 1, 0]
                    yj = coords[j + 1, 1]
                    if (yi > py) != (yj > py):
                        if px < (xj - xi) * (py - yi) / (yj - yi) + xi:
                            inside ^= 1
            out[p] = inside
    return out_arr


cdef inline void _accrue(double px, double py, double frag, double ox, double oy,
                         double s, int64_t n_rows, int64_t n_cols, double[::1] out) noexcept nogil:
    cdef double fc = floor((px - ox) / s)
    cdef double fr = floor((py - oy) / s)
    if fc >= 0 and fc < n_cols and fr >= 0 and fr < n_rows:
        out[<int64_t>fr * n_cols + <int64_t>fc] += frag


def clip_polylines(const double[:, ::1] coords, const int64_t[::1] line_ptr,
                   const double[::1] scale, double ox, double oy, double s,
                   int64_t n_rows, int64_t n_cols):
    """Length of every polyline split at cell boundaries, summed per cell."""
    out_arr = np.zeros(n_rows * n_cols, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t n_lines = line_ptr.shape[0] - 1
    cdef Py_ssize_t li, j, q
    cdef double ax, ay, bx, by, dx, dy, seglen, lo, hi, t, t0, t1, tm, tmp
    cdef int64_t k, k0, k1
    cdef vector[double] ts
    with nogil:
        for li in range(n_lines):
            for j in range(line_ptr[li], line_ptr[li + 1] - 1):
                ax = coords[j, 0]
                ay = coords[j, 1]
                bx = coords[j + 1, 0]
                by = coords[j + 1, 1]
                dx = bx - ax
                dy = by - ay
                seglen = sqrt(dx * dx + dy * dy)
                if seglen == 0.0:
                    continue
                ts.clear()
                ts.push_back(0.0)
                ts.push_back(1.0)
                if dx != 0.0:
                    lo = (ax - ox) / s
                    hi = (bx - ox) / s
                    if lo > hi:
                        tmp = lo
                        lo = hi
                        hi = tmp
                    k0 = <int64_t>floor(lo) + 1
                    k1 = <int64_t>ceil(hi) - 1
                    for k in range(k0, k1 + 1):
                        t = ((ox + k * s) - ax) / dx
                        if t > 0.0 and t < 1.0:
                            ts.push_back(t)
                if dy != 0.0:
                    lo = (ay - oy) / s
                    hi = (by - oy) / s
                    if lo > hi:
                        tmp = lo
                        lo = hi
                        hi = tmp
                    k0 = <int64_t>floor(lo) + 1
                    k1 = <int64_t>ceil(hi) - 1
                    for k in range(k0, k1 + 1):
                        t = ((oy + k * s) - ay) / dy
                        if t > 0.0 and t < 1.0:
                            ts.push_back(t)
                sort(ts.begin(), ts.end())
                for q in range(<Py_ssize_t>ts.size() - 1):
                    t0 = ts[q]
                    t1 = ts[q + 1]
                    if t1 <= t0:
                        continue
                    tm = 0.5 * (t0 + t1)
                    _accrue(ax + tm * dx, ay + tm * dy, (t1 - t0) * seglen * scale[li],
                            ox, oy, s, n_rows, n_cols, out)
    return out_arr


def isochrone_groups(const int64_t[::1] g_ptr, const int64_t[::1] g_nbr, const double[::1] g_w,
                     const int64_t[::1] nc_ptr, const int64_t[::1] nc_cell, const double[::1] nc_snap,
                     const int64_t[::1] grp_node, const int64_t[::1] grp_ptr,
                     const int64_t[::1] o_cell, const double[::1] o_snap, double limit):
    """Bounded Dijkstra once per origin node, then per-origin-cell reach lists.

    Returns ``(counts, cells, dists)``; ``counts`` follows the origin order of
    ``o_cell`` and each origin's block is sorted by cell index.
    """
    cdef Py_ssize_t n_nodes = g_ptr.shape[0] - 1
    cdef Py_ssize_t n_groups = grp_node.shape[0]
    cdef Py_ssize_t n_orig = o_cell.shape[0]
    dist_arr = np.full(n_nodes, np.inf, dtype=np.float64)
    cdef double[::1] dist = dist_arr
    counts_arr = np.zeros(n_orig, dtype=np.int64)
    cdef int64_t[::1] counts = counts_arr
    cdef vector[int64_t] touched, settled
    cdef vector[CellDist] buf, out
    cdef priority_queue[HeapItem] heap
    cdef HeapItem top
    cdef Py_ssize_t gi, oi, si, e, ci
    cdef int64_t u, v, origin, c
    cdef double du, nd, base, t, s_o
    cdef bint found
    with nogil:
        for gi in range(n_groups):
            for si in range(<Py_ssize_t>touched.size()):
                dist[touched[si]] = INFINITY
            touched.clear()
            settled.clear()
            u = grp_node[gi]
            dist[u] = 0.0
            touched.push_back(u)
            heap.push(HeapItem(-0.0, u))
            while not heap.empty():
                top = heap.top()
                heap.pop()
                du = -top.first
                u = top.second
                if du > dist[u]:
                    continue
                settled.push_back(u)
                for e in range(g_ptr[u], g_ptr[u + 1]):
                    v = g_nbr[e]
                    nd = du + g_w[e]
                    if nd <= limit and nd < dist[v]:
                        if dist[v] == INFINITY:
                            touched.push_back(v)
                        dist[v] = nd
                        heap.push(HeapItem(-nd, v))
            for oi in range(grp_ptr[gi], grp_ptr[gi + 1]):
                origin = o_cell[oi]
                s_o = o_snap[oi]
                buf.clear()
                found = False
                for si in range(<Py_ssize_t>settled.size()):
                    v = settled[si]
                    base = s_o + dist[v]
                    if base > limit:
                        continue
                    for ci in range(nc_ptr[v], nc_ptr[v + 1]):
                        t = base + nc_snap[ci]
                        if t <= limit:
                            c = nc_cell[ci]
                            if c == origin:
                                found = True
                                buf.push_back(CellDist(c, 0.0))
                            else:
                                buf.push_back(CellDist(c, t))
                if not found:
                    buf.push_back(CellDist(origin, 0.0))
                sort(buf.begin(), buf.end())
                counts[oi] = buf.size()
                for si in range(<Py_ssize_t>buf.size()):
                    out.push_back(buf[si])
    cdef Py_ssize_t n_out = out.size()
    cells_arr = np.empty(n_out, dtype=np.int64)
    dists_arr = np.empty(n_out, dtype=np.float64)
    cdef int64_t[::1] cells_v = cells_arr
    cdef double[::1] dists_v = dists_arr
    with nogil:
        for si in range(n_out):
            cells_v[si] = out[si].first
            dists_v[si] = out[si].second
    return counts_arr, cells_arr, dists_arr


def smooth_csr(const int64_t[::1] indptr, const int64_t[::1] cells, const double[::1] dists,
               const double[::1] values, const uint8_t[::1] valid, double sigma):
    """Gaussian-weighted mean of ``values`` over each CSR row."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out_arr = np.zeros(n, dtype=np.float64)
    ok_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] out = out_arr
    cdef uint8_t[::1] ok = ok_arr
    cdef double two_s2 = 2.0 * sigma * sigma
    cdef double num, den, w, d
    cdef Py_ssize_t i, e
    cdef int64_t c
    with nogil:
        for i in range(n):
            num = 0.0
            den = 0.0
            for e in range(indptr[i], indptr[i + 1]):
                c = cells[e]
                if valid[c]:
                    d = dists[e]
                    w = exp(-(d * d) / two_s2)
                    num += w * values[c]
                    den += w
            if den > 0.0:
                out[i] = num / den
                ok[i] = 1
    return out_arr, ok_arr
