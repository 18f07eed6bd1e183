"""Synthetic workloads for the SLAM back-end timing."""
from __future__ import annotations

import math
import time

import numpy as np

from .geometry import Pose2D, RelativeMeasurement, relative_pose
from .posegraph import PoseGraph, PoseId, optimize

LOOP = 12  # poses per lap of the synthetic square track


def square_track(n: int) -> list[Pose2D]:
    """Ground-truth poses 1 m apart around a 3 x 3 m square, lap after lap."""
    out = []
    for i in range(n):
        k = i % LOOP
        side, s = divmod(k, 3)
        x, y = [(s, 0), (3, s), (3 - s, 3), (0, 3 - s)][side]
        out.append(Pose2D(float(x), float(y), side * math.pi / 2))
    return out


def synthetic_graph(n_poses: int, n_constraints: int, seed: int = 0, sigma_xy: float = 0.02,
                    sigma_psi: float = 0.01, budget=None) -> tuple[PoseGraph, list[Pose2D]]:
    """A drifting single-drone graph with exact loop closures onto earlier laps."""
    if n_poses < 2:
        raise ValueError("need at least two poses")
    rng = np.random.default_rng(seed)
    truth = square_track(n_poses)
    g = PoseGraph(budget)
    g.add_anchor(PoseId(0, 0), truth[0])
    for i in range(1, n_poses):
        z = relative_pose(truth[i - 1], truth[i])
        noisy = RelativeMeasurement(z.dx + rng.normal(0, sigma_xy), z.dy + rng.normal(0, sigma_xy),
                                    z.dpsi + rng.normal(0, sigma_psi))
        g.add_pose(PoseId(0, i), noisy)
    pairs = [(i - LOOP, i) for i in range(LOOP, n_poses)]
    if len(pairs) < n_constraints:
        extra = [(i - 5, i) for i in range(5, n_poses)]
        pairs += extra
    pick = np.linspace(0, len(pairs) - 1, n_constraints).round().astype(int) if n_constraints else []
    for k in pick:
        a, b = pairs[k]
        g.add_constraint(PoseId(0, a), PoseId(0, b), relative_pose(truth[a], truth[b]))
    return g, truth


def slam_bench(poses, constraints, repeats: int = 3, seed: int = 0) -> list[tuple[int, int, float]]:
    rows = []
    for n in poses:
        for c in constraints:
            g, _ = synthetic_graph(int(n), int(c), seed)
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                optimize(g)
                times.append((time.perf_counter() - t0) * 1e3)
            rows.append((int(n), int(c), float(np.mean(times))))
    return rows


def slam_bench_csv(rows) -> str:
    return "poses,constraints,ms\n" + "".join(f"{n},{c},{ms:.4f}\n" for n, c, ms in rows)
