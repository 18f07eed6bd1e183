"""Simulation and mapping stack for a swarm of ToF-equipped nano-drones."""
from .kernels import BACKEND
from .geometry import Pose2D, RelativeMeasurement, Transform2D, relative_pose, transform_error
from .icp import IcpConfig, IcpResult, icp
from .posegraph import PoseGraph, PoseId, optimize
from .world import NoiseModel, World, load_world

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Pose2D", "RelativeMeasurement", "Transform2D", "relative_pose", "transform_error",
    "IcpConfig", "IcpResult", "icp", "PoseGraph", "PoseId", "optimize", "NoiseModel", "World",
    "load_world",
]
