"""Point-to-point ICP with brute-force correspondences."""
from __future__ import annotations

import gc
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import Transform2D


class IcpError(RuntimeError):
    pass


class TooFewCorrespondences(IcpError):
    pass


class Degenerate(IcpError):
    pass


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 30
    convergence_tol: float = 1e-4
    gating_radius: float = 0.5
    min_correspondences: int = 30

    def __post_init__(self):
        if min(self.max_iterations, self.convergence_tol, self.gating_radius,
               self.min_correspondences) <= 0:
            raise ValueError("ICP configuration values must be positive")


@dataclass
class IcpResult:
    transform: Transform2D
    mean_residual: float
    iterations: int
    converged: bool
    n_correspondences: int = 0
    residual_history: list[float] = field(default_factory=list)


def _points(scan) -> np.ndarray:
    pts = getattr(scan, "points", scan)
    return np.ascontiguousarray(pts, dtype=float).reshape(-1, 2)


def correspondences(p, q, gating: float, min_correspondences: int = 30, backend=None) -> np.ndarray:
    """Nearest neighbour in ``q`` of every point of ``p``, gated by distance.

    Returns an (k, 2) int array of ``(index_p, index_q)`` pairs.
    """
    pairs, _ = _gated_pairs(_points(p), _points(q), gating, min_correspondences, backend)
    return pairs


def _gated_pairs(p, q, gating, min_correspondences, backend=None):
    if len(p) == 0 or len(q) == 0:
        raise TooFewCorrespondences("empty scan")
    idx, d2 = kernels.nearest_neighbors(p, q, backend=backend)
    keep = d2 <= gating * gating
    n = int(keep.sum())
    if n < min_correspondences:
        raise TooFewCorrespondences(
            f"{n} correspondences within {gating} m, need {min_correspondences}")
    pairs = np.stack([np.flatnonzero(keep), idx[keep]], axis=1)
    return pairs, np.sqrt(d2[keep])


def best_rigid_transform(pairs, p, q) -> Transform2D:
    """Closed-form minimiser of sum |q_i - (R p_i + t)|^2 over the pairs."""
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    a = _points(p)[pairs[:, 0]]
    b = _points(q)[pairs[:, 1]]
    if len(a) < 2:
        raise Degenerate("need at least two correspondences")
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    a0, b0 = a - ca, b - cb
    for pts, name in ((a0, "source"), (b0, "target")):
        cov = pts.T @ pts / len(pts)
        if np.linalg.eigvalsh(cov)[0] <= 1e-9:
            raise Degenerate(f"{name} points are collinear; rotation is unobservable")
    cross = float(np.sum(a0[:, 0] * b0[:, 1] - a0[:, 1] * b0[:, 0]))
    dot = float(np.sum(a0[:, 0] * b0[:, 0] + a0[:, 1] * b0[:, 1]))
    theta = math.atan2(cross, dot)
    c, s = math.cos(theta), math.sin(theta)
    tx = cb[0] - (c * ca[0] - s * ca[1])
    ty = cb[1] - (s * ca[0] + c * ca[1])
    return Transform2D(theta, tx, ty)


def icp(p, q, initial: Transform2D | None = None, cfg: IcpConfig | None = None,
        backend=None) -> IcpResult:
    """Align scan ``p`` onto scan ``q``.

    Alternates nearest-neighbour correspondences and the closed-form
    alignment until the mean correspondence distance changes by less
    than ``cfg.convergence_tol``.
    """
    cfg = cfg or IcpConfig()
    src, dst = _points(p), _points(q)
    t = initial or Transform2D.identity()
    history: list[float] = []
    prev = math.inf
    converged = False
    it = 0
    n_pairs = 0
    for it in range(1, cfg.max_iterations + 1):
        pairs, dist = _gated_pairs(t.apply(src), dst, cfg.gating_radius,
                                   cfg.min_correspondences, backend)
        residual = float(dist.mean())
        history.append(residual)
        n_pairs = len(pairs)
        if abs(prev - residual) < cfg.convergence_tol:
            converged = True
            break
        prev = residual
        t = best_rigid_transform(pairs, src, dst)
    return IcpResult(t, history[-1], it, converged, n_pairs, history)


@dataclass
class RuntimeProfile:
    sizes: list[int]
    ms_mean: list[float]
    ms_std: list[float]
    ms_median: list[float]
    coeffs: tuple[float, float, float]
    r_squared: float

    def to_csv(self) -> str:
        lines = ["size,ms_mean,ms_std,ms_median"]
        lines += [f"{n},{m:.6f},{s:.6f},{d:.6f}"
                  for n, m, s, d in zip(self.sizes, self.ms_mean, self.ms_std, self.ms_median)]
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        a, b, c = self.coeffs
        return f"quadratic fit: ms = {a:.6g}*x^2 + {b:.6g}*x + {c:.6g}; R^2 = {self.r_squared:.5f}"


def scan_memory_bytes(n_points: int, n_scans: int = 2) -> int:
    """RAM for ``n_scans`` scans stored as two float32 per point."""
    return n_scans * n_points * 8


def quadratic_fit(x, y) -> tuple[tuple[float, float, float], float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    coeffs = np.polyfit(x, y, 2)
    pred = np.polyval(coeffs, x)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return (float(coeffs[0]), float(coeffs[1]), float(coeffs[2])), r2


def icp_runtime_profile(sizes, repeats: int = 5, seed: int = 0, iterations: int = 10,
                        backend: str | None = None) -> RuntimeProfile:
    """Time ICP against scan size with the brute-force correspondence backend.

    Each run performs exactly ``iterations`` correspondence/alignment
    rounds so the timings measure the per-size cost only. Repeats are
    taken round-robin over the sizes with the garbage collector paused,
    and the quadratic is fitted to the per-size medians; this keeps a
    transient load spike from landing on a single size.
    """
    sizes = [int(n) for n in sizes]
    if not sizes or any(n <= 0 for n in sizes):
        raise ValueError("scan sizes must be positive")
    if repeats <= 0:
        raise ValueError("repeats must be positive")
    rng = np.random.default_rng(seed)
    cfg = IcpConfig(max_iterations=iterations, convergence_tol=1e-300, gating_radius=10.0,
                    min_correspondences=1)
    pairs = []
    for n in sizes:
        pts = _room_points(n, rng)
        pairs.append((pts, Transform2D(math.radians(3.0), 0.05, -0.03).apply(pts)))
        icp(*pairs[-1], Transform2D.identity(), cfg, backend=backend)  # warm-up
    times: list[list[float]] = [[] for _ in sizes]
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repeats):
            for k, (pts, q) in enumerate(pairs):
                t0 = time.perf_counter()
                icp(pts, q, Transform2D.identity(), cfg, backend=backend)
                times[k].append((time.perf_counter() - t0) * 1e3)
    finally:
        if was_enabled:
            gc.enable()
    means = [float(np.mean(t)) for t in times]
    stds = [float(np.std(t)) for t in times]
    medians = [float(np.median(t)) for t in times]
    coeffs, r2 = quadratic_fit(sizes, medians) if len(sizes) >= 3 else ((0.0, 0.0, 0.0), float("nan"))
    return RuntimeProfile(sizes, means, stds, medians, coeffs, r2)


def _room_points(n: int, rng: np.random.Generator) -> np.ndarray:
    """n points on the walls of a 4 x 3 m room, in the room centre's frame."""
    u = rng.random(n) * 14.0
    pts = np.empty((n, 2))
    for i, s in enumerate(u):
        if s < 4:
            pts[i] = (s - 2.0, -1.5)
        elif s < 7:
            pts[i] = (2.0, s - 4 - 1.5)
        elif s < 11:
            pts[i] = (2.0 - (s - 7), 1.5)
        else:
            pts[i] = (-2.0, 1.5 - (s - 11))
    return pts + rng.normal(0, 0.005, pts.shape)
