"""Ready-made worlds and missions used by the tests and benchmarks."""
from __future__ import annotations

import math
from importlib import resources

import numpy as np

from .explorer import ExplorerConfig, Side
from .geometry import Pose2D
from .mission import DroneSpec, MissionConfig, load_mission
from .sensing import SensorGeometry, capture, project_frame, reduce_capture
from .world import NoiseModel, World, load_world

# poses per lap of the square maze, including the four turn poses
SQUARE_LAP_POSES = 12
# poses per lap of the long ring maze
RING_LAP_POSES = 18


def data_path(name: str) -> str:
    return str(resources.files("swarmslam") / "data" / name)


def world(name: str) -> World:
    return load_world(data_path(name if name.endswith(".json") else name + ".json"))


def mission(name: str) -> MissionConfig:
    return load_mission(data_path(name if name.endswith(".json") else name + ".json"))


def square_mission(v_exp: float = 0.8, seed: int = 0, laps: int = 3, noise: NoiseModel | None = None,
                   **kw) -> MissionConfig:
    """Single drone, ``laps`` loops around the square maze."""
    w = world("square_maze")
    spec = DroneSpec(0, w.start_poses[0], ExplorerConfig(v_exp=v_exp, max_waypoints=SQUARE_LAP_POSES * laps))
    return MissionConfig(world=w, drones=[spec], main_drone=0, seed=seed, noise=noise or NoiseModel(), **kw)


def ring_mission(n_drones: int, seed: int = 0, noise: NoiseModel | None = None, main: int = 0,
                 main_speed: float = 0.4, other_speed: float = 0.8, **kw) -> MissionConfig:
    """Two drones each fly the whole ring; four drones each fly half of it.

    Drones start in pairs at opposite corners and leave in opposite
    directions, so the covered area is the same in both set-ups.
    """
    if n_drones not in (2, 4):
        raise ValueError("ring missions are defined for 2 or 4 drones")
    w = world("ring_maze")
    poses = RING_LAP_POSES if n_drones == 2 else RING_LAP_POSES // 2
    specs = []
    for i in range(n_drones):
        v = main_speed if i == main else other_speed
        prio = Side.LEFT if i % 2 == 0 else Side.RIGHT
        specs.append(DroneSpec(i, w.start_poses[i], ExplorerConfig(v_exp=v, max_waypoints=poses,
                                                                    steering_priority=prio)))
    return MissionConfig(world=w, drones=specs, main_drone=main, seed=seed, noise=noise or NoiseModel(), **kw)


def room_world(width: float = 4.0, height: float = 3.0, notch: bool = True) -> World:
    """Closed room, optionally with a corner notch so scans are fully constrained."""
    w, h = width, height
    if notch:
        walls = [[0, 0, w, 0], [w, 0, w, h - 1.0], [w, h - 1.0, w - 1.0, h - 1.0],
                 [w - 1.0, h - 1.0, w - 1.0, h], [w - 1.0, h, 0, h], [0, h, 0, 0]]
    else:
        walls = [[0, 0, w, 0], [w, 0, w, h], [w, h, 0, h], [0, h, 0, 0]]
    return World(np.array(walls, dtype=float), [Pose2D(w / 2, h / 2, 0.0)], (-0.5, -0.5, w + 0.5, h + 0.5))


def static_scan(world: World, pose: Pose2D, noise: NoiseModel | None = None, rng=None,
                geom: SensorGeometry | None = None) -> np.ndarray:
    """A 15-frame spin scan taken with a perfect pose estimate, in the pose's frame.

    The yaw sweep is sampled exactly (no odometry), so only the sensor
    noise in ``noise`` affects the points.
    """
    noise = noise or NoiseModel.noiseless()
    rng = rng if rng is not None else np.random.default_rng(0)
    geom = geom or SensorGeometry()
    pts = []
    for k in range(15):
        yaw = pose.psi + math.radians(-22.5 + 3.0 * k)
        p = Pose2D(pose.x, pose.y, yaw)
        px, ok = capture(world, p, geom, noise, rng)
        d, valid = reduce_capture(px, ok)
        pts.append(project_frame(p, d, valid, geom))
    cloud = np.concatenate(pts)
    return pose.as_transform().inverse().apply(cloud)
