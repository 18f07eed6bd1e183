"""Corridor-following exploration policy.

The primary axis is one of the four body axes (the sensor directions),
selected by index ``k``: sensor ``k`` looks forward along it, ``k+1`` to
its left, ``k+2`` behind and ``k+3`` to its right. Secondary velocity is
positive towards body-left of the primary axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .world import NO_HIT


class Side(str, Enum):
    LEFT = "LEFT"
    RIGHT = "RIGHT"


class Phase(str, Enum):
    EXPLORING = "EXPLORING"
    SCANNING = "SCANNING"
    LANDED = "LANDED"


@dataclass(frozen=True)
class ExplorerConfig:
    v_exp: float = 0.4
    v_stab: float = 2.0
    d_wall: float = 0.5
    d_slow: float = 0.75
    a_exp: float = 0.5
    waypoint_spacing: float = 1.0
    side_wall_range: float = 1.0
    forward_obstacle_threshold: float = 0.6
    steering_priority: Side = Side.LEFT
    initial_axis: int = 0
    arrival_tolerance: float = 0.05
    max_waypoints: int | None = None
    pose_on_turn: bool = True

    def __post_init__(self):
        object.__setattr__(self, "steering_priority", Side(self.steering_priority))
        for name in ("v_exp", "v_stab", "d_wall", "d_slow", "a_exp", "waypoint_spacing",
                     "side_wall_range", "forward_obstacle_threshold", "arrival_tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_waypoints is not None and self.max_waypoints < 0:
            raise ValueError("max_waypoints must be >= 0")


def _near(d: float, limit: float) -> bool:
    return math.isfinite(d) and d < limit


def secondary_velocity(d_left: float, d_right: float, cfg: ExplorerConfig) -> float:
    """Lateral command, positive towards the left wall."""
    left = _near(d_left, cfg.side_wall_range)
    right = _near(d_right, cfg.side_wall_range)
    if left and right:
        return (d_left - 0.5 * (d_left + d_right)) * cfg.v_stab
    if left:
        return (d_left - cfg.d_wall) * cfg.v_stab
    if right:
        return -(d_right - cfg.d_wall) * cfg.v_stab
    return 0.0


def primary_velocity(d_w: float, last_v: float, dt: float, cfg: ExplorerConfig) -> float:
    if d_w < 0:
        raise ValueError("distance to waypoint must be >= 0")
    v = (d_w / cfg.d_slow + 0.1) * cfg.v_exp if d_w < cfg.d_slow else cfg.v_exp
    return min(v, last_v + cfg.a_exp * dt)


def axis_vector(k: int) -> np.ndarray:
    a = (k % 4) * math.pi / 2
    return np.array([round(math.cos(a)), round(math.sin(a))], dtype=float)


def directions(dist4, k: int) -> tuple[float, float, float, float]:
    """(front, left, back, right) for primary axis ``k``."""
    return tuple(float(dist4[(k + i) % 4]) for i in range(4))


@dataclass
class ExplorerState:
    axis: int
    next_waypoint: np.ndarray
    direction: np.ndarray  # world-frame unit vector of the axis, in the estimate
    last_velocity: float = 0.0
    phase: Phase = Phase.EXPLORING
    n_waypoints: int = 0
    turns: int = 0

    @classmethod
    def start(cls, est_pose, cfg: ExplorerConfig) -> "ExplorerState":
        s = cls(cfg.initial_axis % 4, np.zeros(2), np.zeros(2))
        return set_waypoint(s, est_pose, cfg)


def set_waypoint(state: ExplorerState, est_pose, cfg: ExplorerConfig) -> ExplorerState:
    c, s = math.cos(est_pose.psi), math.sin(est_pose.psi)
    a = axis_vector(state.axis)
    u = np.array([c * a[0] - s * a[1], s * a[0] + c * a[1]])
    return replace(state, direction=u, next_waypoint=est_pose.xy + cfg.waypoint_spacing * u)


def remaining(state: ExplorerState, est_pose) -> float:
    """Distance left to the waypoint along the primary axis."""
    return float(np.dot(state.next_waypoint - est_pose.xy, state.direction))


def on_obstacle(state: ExplorerState, front: float, left: float, right: float,
                cfg: ExplorerConfig) -> ExplorerState:
    """Turn towards a free side, priority side first; land in a dead end."""
    free_left = not _near(left, cfg.side_wall_range)
    free_right = not _near(right, cfg.side_wall_range)
    order = [(+1, free_left), (-1, free_right)]
    if cfg.steering_priority is Side.RIGHT:
        order.reverse()
    for turn, free in order:
        if free:
            return replace(state, axis=(state.axis + turn) % 4, last_velocity=0.0,
                           turns=state.turns + 1)
    return replace(state, phase=Phase.LANDED, last_velocity=0.0)


@dataclass
class Decision:
    velocity: tuple[float, float] = (0.0, 0.0)  # body frame
    event: str | None = None  # "waypoint", "turn" or "landed"
    state: ExplorerState | None = None


def decide(state: ExplorerState, est_pose, dist4, dt: float, cfg: ExplorerConfig,
           side4=None) -> Decision:
    """One control tick while EXPLORING.

    ``dist4`` are the per-sensor minimum distances; the front one triggers
    turns. ``side4``, if given, replaces them for the side walls (the
    mission passes the minimum over the centre columns so that a corner
    seen by the outer columns does not pull the drone sideways). Returns the body-frame
    command and the state after the tick; ``event`` tells the caller a
    waypoint was reached or a turn happened (the caller then adds a pose
    and scans) or that the drone landed.
    """
    if state.phase is not Phase.EXPLORING:
        return Decision((0.0, 0.0), None, state)
    front = float(dist4[state.axis % 4])
    _, left, _, right = directions(dist4 if side4 is None else side4, state.axis)
    d_w = remaining(state, est_pose)
    if d_w < cfg.arrival_tolerance:
        state = replace(state, last_velocity=0.0, n_waypoints=state.n_waypoints + 1)
        return Decision((0.0, 0.0), "waypoint", state)
    if _near(front, cfg.forward_obstacle_threshold):
        state = on_obstacle(state, front, left, right, cfg)
        if state.phase is Phase.LANDED:
            return Decision((0.0, 0.0), "landed", state)
        state = set_waypoint(state, est_pose, cfg)
        return Decision((0.0, 0.0), "turn", state)
    v_p = primary_velocity(d_w, state.last_velocity, dt, cfg)
    v_s = secondary_velocity(left, right, cfg)
    a = axis_vector(state.axis)
    b = axis_vector(state.axis + 1)
    vel = (float(v_p * a[0] + v_s * b[0]), float(v_p * a[1] + v_s * b[1]))
    return Decision(vel, None, replace(state, last_velocity=v_p))
