"""Rigid 2D poses and transforms.

Angles are radians everywhere inside the package and are kept in
(-pi, pi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w < 0.0:
        w += 2.0 * math.pi
    w -= math.pi
    if w <= -math.pi:
        w = math.pi
    return w


def wrap_angles(a):
    """Vectorised :func:`wrap_angle`."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w <= -np.pi, np.pi, w)


def rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2D:
    """Drone state (x, y, psi) in the world frame."""

    x: float
    y: float
    psi: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"pose position must be finite, got ({self.x}, {self.y})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_transform(self) -> "Transform2D":
        return Transform2D(self.psi, self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi])


@dataclass(frozen=True)
class RelativeMeasurement:
    """Pose ``to`` expressed in the frame of pose ``from``."""

    dx: float
    dy: float
    dpsi: float

    def __post_init__(self):
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))
        object.__setattr__(self, "dpsi", wrap_angle(float(self.dpsi)))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dpsi])

    def as_transform(self) -> "Transform2D":
        return Transform2D(self.dpsi, self.dx, self.dy)


@dataclass(frozen=True)
class Transform2D:
    """Rigid transform ``p -> R(theta) p + (tx, ty)``.

    The rotation is stored as its angle; :attr:`rotation` gives the
    orthonormal matrix.
    """

    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "tx", float(self.tx))
        object.__setattr__(self, "ty", float(self.ty))

    @classmethod
    def identity(cls) -> "Transform2D":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, m) -> "Transform2D":
        m = np.asarray(m, dtype=float)
        return cls(math.atan2(m[1, 0], m[0, 0]), m[0, 2], m[1, 2])

    @property
    def rotation(self) -> np.ndarray:
        return rot(self.theta)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix."""
        m = np.eye(3)
        m[:2, :2] = self.rotation
        m[:2, 2] = (self.tx, self.ty)
        return m

    def inverse(self) -> "Transform2D":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Transform2D(-self.theta, -(c * self.tx + s * self.ty), s * self.tx - c * self.ty)

    def apply(self, points) -> np.ndarray:
        """Transform an (n, 2) array (or a single 2-vector)."""
        pts = np.asarray(points, dtype=float)
        c, s = math.cos(self.theta), math.sin(self.theta)
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([c * x - s * y + self.tx, s * x + c * y + self.ty], axis=-1)

    def __matmul__(self, other: "Transform2D") -> "Transform2D":
        return compose(self, other)

    def as_pose(self) -> Pose2D:
        return Pose2D(self.tx, self.ty, self.theta)


def compose(a: Transform2D, b: Transform2D) -> Transform2D:
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Transform2D(a.theta + b.theta,
                       c * b.tx - s * b.ty + a.tx,
                       s * b.tx + c * b.ty + a.ty)


def relative_pose(frm: Pose2D, to: Pose2D) -> RelativeMeasurement:
    """Pose ``to`` seen from ``frm``: world delta rotated by -psi_from."""
    c, s = math.cos(frm.psi), math.sin(frm.psi)
    wx, wy = to.x - frm.x, to.y - frm.y
    return RelativeMeasurement(c * wx + s * wy, -s * wx + c * wy, to.psi - frm.psi)


def integrate(frm: Pose2D, z: RelativeMeasurement) -> Pose2D:
    """Forward-integrate ``frm`` by the relative measurement ``z``."""
    c, s = math.cos(frm.psi), math.sin(frm.psi)
    return Pose2D(frm.x + c * z.dx - s * z.dy, frm.y + s * z.dx + c * z.dy, frm.psi + z.dpsi)


def transform_error(t_icp: Transform2D, t_gt: Transform2D) -> tuple[float, float]:
    """Translation and rotation error of ``T_icp · T_gt^-1``.

    Returns ``(e_t, e_R)`` with ``e_t = |Δt|`` in meters and
    ``e_R = arccos(ΔR[0, 0])`` in radians.
    """
    delta = t_icp.matrix() @ np.linalg.inv(t_gt.matrix())
    e_t = float(math.hypot(delta[0, 2], delta[1, 2]))
    e_r = float(math.acos(min(1.0, max(-1.0, delta[0, 0]))))
    return e_t, e_r
