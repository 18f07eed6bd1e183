"""Numpy implementations of the hot kernels.

These are the reference backend. The compiled module mirrors the
arithmetic exactly, so switching backends never changes a result.
"""
import numpy as np


def nearest_neighbors(p, q):
    """Brute-force Euclidean nearest neighbour of every row of ``p`` in ``q``.

    Returns ``(idx, dist2)``; ties resolve to the lowest index in ``q``.
    """
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    if len(q) == 0:
        return (np.full(len(p), -1, dtype=np.int64),
                np.full(len(p), np.inf))
    dx = p[:, 0:1] - q[None, :, 0]
    dy = p[:, 1:2] - q[None, :, 1]
    d2 = dx * dx + dy * dy
    idx = np.argmin(d2, axis=1).astype(np.int64)
    return idx, d2[np.arange(len(p)), idx]


def ray_cast_batch(origins, cos_a, sin_a, max_range, walls):
    origins = np.asarray(origins, dtype=np.float64)
    n = len(origins)
    if len(walls) == 0:
        return np.full(n, np.inf)
    dx = np.asarray(cos_a, dtype=np.float64)[:, None]
    dy = np.asarray(sin_a, dtype=np.float64)[:, None]
    ex = (walls[:, 2] - walls[:, 0])[None, :]
    ey = (walls[:, 3] - walls[:, 1])[None, :]
    denom = dx * ey - dy * ex
    ax = walls[None, :, 0] - origins[:, 0:1]
    ay = walls[None, :, 1] - origins[:, 1:2]
    parallel = np.abs(denom) < 1e-12
    safe = np.where(parallel, 1.0, denom)
    t = (ax * ey - ay * ex) / safe
    s = (ax * dy - ay * dx) / safe
    hit = ~parallel & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
    best = np.where(hit, t, np.inf).min(axis=1)
    best[best > np.asarray(max_range, dtype=np.float64)] = np.inf
    return best
