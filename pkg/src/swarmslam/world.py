"""Maze worlds, ray casting and drone kinematics with odometry error."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .geometry import Pose2D, wrap_angle

NO_HIT = math.inf
"""Returned by :func:`ray_cast` when nothing is hit within range."""

TICK_HZ = 15.0
TICK_DT = 1.0 / TICK_HZ


class WorldError(ValueError):
    """Malformed or geometrically invalid maze document."""


@dataclass
class World:
    walls: np.ndarray  # (k, 4) rows x1, y1, x2, y2
    start_poses: list[Pose2D]
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        self.walls = np.ascontiguousarray(np.asarray(self.walls, dtype=float).reshape(-1, 4))
        validate_world(self)

    @property
    def segments(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        return [((w[0], w[1]), (w[2], w[3])) for w in self.walls]

    def contains(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def to_dict(self) -> dict:
        return {
            "walls": [list(map(float, w)) for w in self.walls],
            "starts": [[p.x, p.y, math.degrees(p.psi)] for p in self.start_poses],
            "bounds": list(map(float, self.bounds)),
        }


def validate_world(world: World) -> None:
    xmin, ymin, xmax, ymax = world.bounds
    if not (xmax > xmin and ymax > ymin):
        raise WorldError(f"bounds must satisfy xmin < xmax and ymin < ymax, got {world.bounds}")
    for i, w in enumerate(world.walls):
        if not np.all(np.isfinite(w)):
            raise WorldError(f"wall {i} has non-finite coordinates {list(w)}")
        if math.hypot(w[2] - w[0], w[3] - w[1]) <= 0.0:
            raise WorldError(f"wall {i} has zero length: {list(w)}")
    for i, p in enumerate(world.start_poses):
        if not world.contains(p.x, p.y):
            raise WorldError(f"start pose {i} ({p.x}, {p.y}) lies outside bounds {world.bounds}")
        if len(world.walls) and point_segment_distance(p.xy, world.walls).min() < 1e-6:
            raise WorldError(f"start pose {i} ({p.x}, {p.y}) lies on a wall")


def load_world(document) -> World:
    """Parse a maze JSON document (text, dict or path).

    Layout: ``{"walls": [[x1,y1,x2,y2],...], "starts": [[x,y,psi_deg],...],
    "bounds": [xmin,ymin,xmax,ymax]}``.
    """
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        document = Path(document).read_text()
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise WorldError(f"maze JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    else:
        data = document
    if not isinstance(data, dict):
        raise WorldError("maze document must be a JSON object")
    for key in ("walls", "starts", "bounds"):
        if key not in data:
            raise WorldError(f"maze document missing field {key!r}")
    walls = []
    for i, w in enumerate(data["walls"]):
        if not isinstance(w, (list, tuple)) or len(w) != 4:
            raise WorldError(f"walls[{i}] must be [x1, y1, x2, y2], got {w!r}")
        walls.append([float(v) for v in w])
    starts = []
    for i, s in enumerate(data["starts"]):
        if not isinstance(s, (list, tuple)) or len(s) != 3:
            raise WorldError(f"starts[{i}] must be [x, y, psi_deg], got {s!r}")
        starts.append(Pose2D(float(s[0]), float(s[1]), math.radians(float(s[2]))))
    b = data["bounds"]
    if not isinstance(b, (list, tuple)) or len(b) != 4:
        raise WorldError(f"bounds must be [xmin, ymin, xmax, ymax], got {b!r}")
    return World(np.array(walls, dtype=float).reshape(-1, 4), starts, tuple(float(v) for v in b))


def point_segment_distance(point, walls) -> np.ndarray:
    """Distance from one point to every segment (perpendicular or endpoint)."""
    walls = np.asarray(walls, dtype=float).reshape(-1, 4)
    p = np.asarray(point, dtype=float)
    a = walls[:, 0:2]
    e = walls[:, 2:4] - a
    ee = np.einsum("ij,ij->i", e, e)
    u = np.clip(np.einsum("ij,ij->i", p - a, e) / ee, 0.0, 1.0)
    closest = a + u[:, None] * e
    return np.hypot(*(p - closest).T)


def ray_cast(world: World, origin, angle: float, max_range: float) -> float:
    """Distance to the nearest wall along a ray, or :data:`NO_HIT`."""
    d = kernels.ray_cast_batch(np.asarray(origin, dtype=float).reshape(1, 2),
                               np.array([angle]), max_range, world.walls)
    return float(d[0])


def first_crossing(p0, p1, walls) -> float | None:
    """Fraction in [0, 1] along p0->p1 where it first touches a wall."""
    if len(walls) == 0:
        return None
    p0 = np.asarray(p0, dtype=float)
    d = np.asarray(p1, dtype=float) - p0
    if d[0] == 0.0 and d[1] == 0.0:
        return None
    a = walls[:, 0:2]
    e = walls[:, 2:4] - a
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    ok = np.abs(denom) >= 1e-12
    safe = np.where(ok, denom, 1.0)
    ap = a - p0
    t = (ap[:, 0] * e[:, 1] - ap[:, 1] * e[:, 0]) / safe
    s = (ap[:, 0] * d[1] - ap[:, 1] * d[0]) / safe
    hit = ok & (t >= 0.0) & (t <= 1.0) & (s >= 0.0) & (s <= 1.0)
    if not hit.any():
        return None
    return float(t[hit].min())


@dataclass(frozen=True)
class NoiseModel:
    """Odometry and range-sensor error model.

    Velocity noise is white per tick with standard deviation
    ``velocity_noise_std + velocity_noise_per_speed * |v|`` per axis; the
    yaw-rate noise gains the same kind of speed term and is multiplied by
    ``spin_yaw_noise_multiplier`` while the drone spins.
    """

    velocity_scale_bias: float = 1.03
    velocity_noise_std: float = 0.005
    velocity_noise_per_speed: float = 0.3
    yaw_noise_std: float = 0.001
    yaw_noise_per_speed: float = 0.1
    spin_yaw_noise_multiplier: float = 3.0
    range_noise_std: float = 0.02
    pixel_dropout_prob: float = 0.03

    def __post_init__(self):
        for name in ("velocity_noise_std", "velocity_noise_per_speed", "yaw_noise_std",
                     "yaw_noise_per_speed", "spin_yaw_noise_multiplier", "range_noise_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.pixel_dropout_prob <= 1.0:
            raise ValueError("pixel_dropout_prob must lie in [0, 1]")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, d: dict | None) -> "NoiseModel":
        if not d:
            return cls()
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown noise model fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class DroneState:
    true_pose: Pose2D
    est_pose: Pose2D
    velocity_cmd: tuple[float, float] = (0.0, 0.0)  # body frame, +x front, +y left
    yaw_rate_cmd: float = 0.0
    clock: float = 0.0
    collided: bool = False

    @classmethod
    def at(cls, pose: Pose2D) -> "DroneState":
        return cls(pose, pose)


SPIN_RATE_THRESHOLD = 0.1  # rad/s


def step(state: DroneState, world: World, dt: float, noise: NoiseModel,
         rng: np.random.Generator) -> DroneState:
    """Advance one drone by ``dt`` under its current commands.

    The true pose integrates the commands exactly, stopping just short of
    any wall crossed. The estimate integrates the executed body velocity
    times ``velocity_scale_bias`` plus Gaussian noise. Three normal draws
    are consumed per call regardless of the noise settings.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    vx, vy = state.velocity_cmd
    w = state.yaw_rate_cmd
    speed = math.hypot(vx, vy)
    n = rng.standard_normal(3)

    tp = state.true_pose
    c, s = math.cos(tp.psi), math.sin(tp.psi)
    frac = 1.0
    collided = False
    if vx != 0.0 or vy != 0.0:
        dx = (c * vx - s * vy) * dt
        dy = (s * vx + c * vy) * dt
        hit = first_crossing((tp.x, tp.y), (tp.x + dx, tp.y + dy), world.walls)
        if hit is not None:
            collided = True
            length = math.hypot(dx, dy)
            frac = max(0.0, hit - 1e-9 / length)
    bvx, bvy = vx * frac, vy * frac
    true_pose = Pose2D(tp.x + (c * bvx - s * bvy) * dt, tp.y + (s * bvx + c * bvy) * dt, tp.psi + w * dt)

    sigma_v = noise.velocity_noise_std + noise.velocity_noise_per_speed * speed * frac
    sigma_w = noise.yaw_noise_std + noise.yaw_noise_per_speed * speed * frac
    if abs(w) > SPIN_RATE_THRESHOLD:
        sigma_w *= noise.spin_yaw_noise_multiplier
    mvx = noise.velocity_scale_bias * bvx + sigma_v * n[0]
    mvy = noise.velocity_scale_bias * bvy + sigma_v * n[1]
    ep = state.est_pose
    ce, se = math.cos(ep.psi), math.sin(ep.psi)
    est_pose = Pose2D(ep.x + (ce * mvx - se * mvy) * dt, ep.y + (se * mvx + ce * mvy) * dt,
                      ep.psi + (w + sigma_w * n[2]) * dt)
    return replace(state, true_pose=true_pose, est_pose=est_pose, clock=state.clock + dt,
                   collided=collided)


TRAJECTORY_HEADER = "t,drone,true_x,true_y,true_psi,est_x,est_y,est_psi"


@dataclass
class TrajectoryRecorder:
    rows: list[tuple] = field(default_factory=list)

    def record(self, t: float, drone: int, state: DroneState) -> None:
        tp, ep = state.true_pose, state.est_pose
        self.rows.append((t, drone, tp.x, tp.y, tp.psi, ep.x, ep.y, ep.psi))

    def to_csv(self) -> str:
        lines = [TRAJECTORY_HEADER]
        for r in self.rows:
            lines.append(f"{r[0]:.6f},{r[1]}," + ",".join(repr(float(v)) for v in r[2:]))
        return "\n".join(lines) + "\n"

    def per_drone(self) -> dict[int, np.ndarray]:
        out: dict[int, list] = {}
        for r in self.rows:
            out.setdefault(r[1], []).append(r)
        return {k: np.array(v, dtype=float) for k, v in out.items()}


def heading_error(a: float, b: float) -> float:
    return abs(wrap_angle(a - b))
