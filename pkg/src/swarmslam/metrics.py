"""Pose and map error metrics against ground truth."""
from __future__ import annotations

import numpy as np


def _xy(poses) -> np.ndarray:
    out = []
    for p in poses:
        if hasattr(p, "x"):
            out.append((p.x, p.y))
        else:
            out.append((p[0], p[1]))
    return np.asarray(out, dtype=float).reshape(-1, 2)


def rmse_poses(estimates, ground_truth) -> float:
    """Root-mean-square position error over x and y only."""
    est, gt = _xy(estimates), _xy(ground_truth)
    if len(est) != len(gt):
        raise ValueError(f"length mismatch: {len(est)} estimates vs {len(gt)} ground-truth poses")
    if len(est) == 0:
        raise ValueError("no poses to compare")
    return float(np.sqrt(np.mean(np.sum((est - gt) ** 2, axis=1))))


def point_to_walls(points, walls) -> np.ndarray:
    """Shortest distance of every point to the wall set.

    Per wall this is the perpendicular distance when the foot of the
    perpendicular lies on the segment and the nearest endpoint otherwise.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    w = np.asarray(walls, dtype=float).reshape(-1, 4)
    a = w[None, :, 0:2]
    e = w[None, :, 2:4] - a
    ap = pts[:, None, :] - a
    ee = np.sum(e * e, axis=-1)
    u = np.sum(ap * e, axis=-1) / ee
    inside = (u >= 0.0) & (u <= 1.0)
    perp = np.abs(ap[..., 0] * e[..., 1] - ap[..., 1] * e[..., 0]) / np.sqrt(ee)
    d1 = np.hypot(ap[..., 0], ap[..., 1])
    d2 = np.hypot(pts[:, None, 0] - w[None, :, 2], pts[:, None, 1] - w[None, :, 3])
    d = np.where(inside, perp, np.minimum(d1, d2))
    return d.min(axis=1)


def rmse_map(points, walls) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("empty point cloud")
    if len(np.asarray(walls).reshape(-1, 4)) == 0:
        raise ValueError("no walls to compare against")
    d = point_to_walls(pts, walls)
    return float(np.sqrt(np.mean(d * d)))
