# cython: language_level=3
"""Compiled inner loops: brute-force nearest neighbours and ray casting.

Arithmetic is written in the same order as ``_pykernels`` so both
backends return bit-identical results.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()


def nearest_neighbors(const double[:, ::1] p, const double[:, ::1] q):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t m = q.shape[0]
    cdef Py_ssize_t i, j, best
    cdef double px, py, dx, dy, d2, best_d2
    idx = np.empty(n, dtype=np.int64)
    dist2 = np.empty(n, dtype=np.float64)
    # split coordinates so the inner loop reads two contiguous streams
    qx_arr = np.ascontiguousarray(q[:, 0])
    qy_arr = np.ascontiguousarray(q[:, 1])
    cdef const double[::1] qx = qx_arr
    cdef const double[::1] qy = qy_arr
    cdef cnp.int64_t[::1] idx_v = idx
    cdef double[::1] dist2_v = dist2
    with nogil:
        for i in range(n):
            px = p[i, 0]
            py = p[i, 1]
            best = -1
            best_d2 = INFINITY
            for j in range(m):
                dx = px - qx[j]
                dx = dx * dx
                # dx*dx + dy*dy >= dx*dx, so this candidate cannot win
                if dx >= best_d2:
                    continue
                dy = py - qy[j]
                d2 = dx + dy * dy
                if d2 < best_d2:
                    best_d2 = d2
                    best = j
            idx_v[i] = best
            dist2_v[i] = best_d2
    return idx, dist2


def ray_cast_batch(const double[:, ::1] origins, const double[::1] cos_a,
                   const double[::1] sin_a, const double[::1] max_range,
                   const double[:, ::1] walls):
    cdef Py_ssize_t n = origins.shape[0]
    cdef Py_ssize_t k = walls.shape[0]
    cdef Py_ssize_t i, w
    cdef double ox, oy, dx, dy, ex, ey, ax, ay, denom, t, s, best
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    with nogil:
        for i in range(n):
            ox = origins[i, 0]
            oy = origins[i, 1]
            dx = cos_a[i]
            dy = sin_a[i]
            best = INFINITY
            for w in range(k):
                ex = walls[w, 2] - walls[w, 0]
                ey = walls[w, 3] - walls[w, 1]
                denom = dx * ey - dy * ex
                if fabs(denom) < 1e-12:
                    continue
                ax = walls[w, 0] - ox
                ay = walls[w, 1] - oy
                t = (ax * ey - ay * ex) / denom
                s = (ax * dy - ay * dx) / denom
                if t >= 0.0 and s >= 0.0 and s <= 1.0 and t < best:
                    best = t
            if best > max_range[i]:
                best = INFINITY
            out_v[i] = best
    return out
