"""Multi-zone ToF sensing: 8x8 captures, column reduction, projection, scans.

Sensors are indexed 0..3 (front, left, back, right) and zones 0..7 from
the rightmost to the leftmost column.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import Pose2D, Transform2D
from .world import NO_HIT, TICK_DT, DroneState, NoiseModel, World, step

N_SENSORS = 4
N_ZONES = 8
FOV = math.radians(45.0)
MAX_DISTANCE = 4.0
CENTER_ROWS = slice(2, 6)
FRAMES_PER_SCAN = 15
MAX_FRAME_POINTS = N_SENSORS * N_ZONES
MAX_SCAN_POINTS = FRAMES_PER_SCAN * MAX_FRAME_POINTS
LOW_DENSITY_POINTS = 50

SPIN_ANGLE = math.radians(45.0)
SPIN_RATE = math.radians(22.5)
FRAME_EVERY_TICKS = 2  # 15 Hz engine, 7.5 Hz frames


def default_zone_angles() -> np.ndarray:
    j = np.arange(1, N_ZONES + 1)
    return np.radians((j - 4.5) * (45.0 / N_ZONES))


@dataclass(frozen=True)
class SensorGeometry:
    betas: tuple[float, ...] = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
    offset_x: tuple[float, ...] = (0.01, 0.01, 0.01, 0.01)
    offset_y: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)
    zone_angles: tuple[float, ...] = tuple(default_zone_angles())

    def __post_init__(self):
        if len(set(round(b, 12) for b in self.betas)) != len(self.betas):
            raise ValueError("sensor mounting rotations must be distinct")
        if any(abs(t) >= FOV / 2 for t in self.zone_angles):
            raise ValueError("zone angles must lie inside the 45 degree field of view")


@dataclass(frozen=True)
class TofColumnReading:
    sensor_index: int
    zone_index: int
    distance: float
    valid: bool

    def __post_init__(self):
        if self.valid and not (0.0 < self.distance <= MAX_DISTANCE):
            raise ValueError(f"valid reading needs 0 < d <= {MAX_DISTANCE}, got {self.distance}")


class InvalidReading(ValueError):
    pass


def reduce_matrix_column(pixels, validity, column: int, sensor_index: int = 0) -> TofColumnReading:
    """Median of the valid pixels among the centre four rows of one column."""
    pixels = np.asarray(pixels, dtype=float)
    validity = np.asarray(validity, dtype=bool)
    vals = pixels[CENTER_ROWS, column][validity[CENTER_ROWS, column]]
    if vals.size == 0:
        return TofColumnReading(sensor_index, column, NO_HIT, False)
    d = float(np.median(vals))
    if not 0.0 < d <= MAX_DISTANCE:
        return TofColumnReading(sensor_index, column, d, False)
    return TofColumnReading(sensor_index, column, d, True)


def reduce_capture(pixels, validity) -> tuple[np.ndarray, np.ndarray]:
    """Reduce a (4, 8, 8) capture to per-column distances and validity.

    Equivalent to :func:`reduce_matrix_column` on every column.
    """
    px = np.asarray(pixels, dtype=float)[:, CENTER_ROWS, :]
    ok = np.asarray(validity, dtype=bool)[:, CENTER_ROWS, :]
    masked = np.where(ok, px, np.nan)
    count = ok.sum(axis=1)
    with np.errstate(all="ignore"):
        srt = np.sort(masked, axis=1)  # nan last
    d = np.full(count.shape, np.nan)
    for c in (1, 2, 3, 4):
        sel = count == c
        if not sel.any():
            continue
        lo = srt[:, (c - 1) // 2, :]
        hi = srt[:, c // 2, :]
        d = np.where(sel, (lo + hi) / 2.0, d)
    valid = (count > 0) & (d > 0.0) & (d <= MAX_DISTANCE)
    return np.where(np.isnan(d), NO_HIT, d), valid


def project(pose: Pose2D, reading: TofColumnReading, geom: SensorGeometry) -> np.ndarray:
    """World-frame point of one column reading taken at ``pose``."""
    if not reading.valid:
        raise InvalidReading(f"cannot project invalid reading {reading}")
    i, j = reading.sensor_index, reading.zone_index
    d = reading.distance
    a = pose.psi + geom.betas[i]
    bx = d + geom.offset_x[i]
    by = math.tan(geom.zone_angles[j]) * d + geom.offset_y[i]
    c, s = math.cos(a), math.sin(a)
    return np.array([pose.x + c * bx - s * by, pose.y + s * bx + c * by])


def project_frame(pose: Pose2D, distances, valid, geom: SensorGeometry) -> np.ndarray:
    """Vectorised projection of a reduced (4, 8) capture; returns (k, 2)."""
    valid = np.asarray(valid, dtype=bool)
    d = np.where(valid, np.asarray(distances, dtype=float), 0.0)
    betas = np.asarray(geom.betas)[:, None]
    a = pose.psi + betas
    bx = d + np.asarray(geom.offset_x)[:, None]
    by = np.tan(np.asarray(geom.zone_angles))[None, :] * d + np.asarray(geom.offset_y)[:, None]
    c, s = np.cos(a), np.sin(a)
    x = pose.x + c * bx - s * by
    y = pose.y + s * bx + c * by
    return np.stack([x[valid], y[valid]], axis=-1)


def true_column_distances(world: World, pose: Pose2D, geom: SensorGeometry) -> np.ndarray:
    """Noise-free per-column axial distances (4, 8); :data:`NO_HIT` beyond range."""
    betas = np.asarray(geom.betas)
    thetas = np.asarray(geom.zone_angles)
    ox, oy = np.asarray(geom.offset_x), np.asarray(geom.offset_y)
    a = pose.psi + betas
    c, s = np.cos(a), np.sin(a)
    origins = np.stack([pose.x + c * ox - s * oy, pose.y + s * ox + c * oy], axis=-1)
    origins = np.repeat(origins, N_ZONES, axis=0)
    angles = (a[:, None] + thetas[None, :]).reshape(-1)
    cos_t = np.tile(np.cos(thetas), N_SENSORS)
    r = kernels.ray_cast_batch(origins, angles, MAX_DISTANCE / cos_t, world.walls)
    d = r * cos_t
    d[~np.isfinite(r)] = NO_HIT
    d[d > MAX_DISTANCE] = NO_HIT
    return d.reshape(N_SENSORS, N_ZONES)


def capture(world: World, pose: Pose2D, geom: SensorGeometry, noise: NoiseModel,
            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simulate one simultaneous capture of the four 8x8 sensors.

    All rows of a column image the same wall in 2D; every pixel gets its
    own range noise and dropout. Returns ``(pixels, validity)``, both
    shaped (4, 8, 8) as (sensor, row, column).
    """
    d = true_column_distances(world, pose, geom)
    hit = np.isfinite(d)
    base = np.where(hit, d, 0.0)[:, None, :]
    pixels = base + noise.range_noise_std * rng.standard_normal((N_SENSORS, 8, N_ZONES))
    drop = rng.random((N_SENSORS, 8, N_ZONES)) < noise.pixel_dropout_prob
    validity = hit[:, None, :] & ~drop & (pixels > 0.0) & (pixels <= MAX_DISTANCE)
    return pixels, validity


CENTER_ZONES = slice(2, 6)


def directional_minimum(distances, valid, zones=slice(None)) -> np.ndarray:
    """Minimum valid distance seen by each sensor, :data:`NO_HIT` if none."""
    d = np.where(valid, distances, np.inf)
    return d[:, zones].min(axis=1)


@dataclass
class ScanFrame:
    points: np.ndarray
    pose_at_capture: Pose2D

    def __post_init__(self):
        if len(self.points) > MAX_FRAME_POINTS:
            raise ValueError("a scan frame holds at most 32 points")


@dataclass
class Scan:
    """Stacked scan frames in world coordinates plus the anchor pose."""

    points: np.ndarray
    anchor_pose: Pose2D
    pose_id: tuple[int, int] | None = None
    n_frames: int = FRAMES_PER_SCAN

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(self.points) > MAX_SCAN_POINTS:
            raise ValueError("a scan holds at most 480 points")

    @property
    def low_density(self) -> bool:
        return len(self.points) < LOW_DENSITY_POINTS

    def local_points(self) -> np.ndarray:
        """Points in the anchor pose's frame."""
        return self.anchor_pose.as_transform().inverse().apply(self.points)

    @classmethod
    def from_local(cls, local, anchor_pose: Pose2D, pose_id=None) -> "Scan":
        pts = anchor_pose.as_transform().apply(np.asarray(local, dtype=float).reshape(-1, 2))
        return cls(pts.reshape(-1, 2), anchor_pose, pose_id)

    def reanchored(self, new_anchor: Pose2D) -> "Scan":
        """The same scan moved rigidly so that its anchor becomes ``new_anchor``."""
        return Scan.from_local(self.local_points(), new_anchor, self.pose_id)


@dataclass
class SpinScanner:
    """Yaw profile and frame schedule of one scan acquisition.

    Rotate -22.5 degrees, sweep +45 degrees while taking a frame every
    second tick, rotate back. Call :meth:`command` once per tick before
    the drone is stepped.
    """

    anchor_pose: Pose2D
    pose_id: tuple[int, int] | None = None
    dt: float = TICK_DT
    tick: int = 0
    frames: list[ScanFrame] = field(default_factory=list)

    def __post_init__(self):
        self.pre_ticks = int(round((SPIN_ANGLE / 2) / SPIN_RATE / self.dt))
        self.sweep_ticks = int(round(SPIN_ANGLE / SPIN_RATE / self.dt))
        self.total_ticks = 2 * self.pre_ticks + self.sweep_ticks

    @property
    def done(self) -> bool:
        return self.tick >= self.total_ticks

    def command(self) -> tuple[float, bool]:
        """Yaw rate for this tick and whether to capture a frame first."""
        k = self.tick
        if k < self.pre_ticks:
            return -SPIN_RATE, False
        k -= self.pre_ticks
        if k < self.sweep_ticks:
            want = k % FRAME_EVERY_TICKS == 0 and len(self.frames) < FRAMES_PER_SCAN
            return SPIN_RATE, want
        return -SPIN_RATE, False

    def add_frame(self, points, pose: Pose2D) -> None:
        self.frames.append(ScanFrame(np.asarray(points, dtype=float).reshape(-1, 2), pose))

    def advance(self) -> None:
        self.tick += 1

    def result(self) -> Scan:
        pts = [f.points for f in self.frames]
        pts = np.concatenate(pts) if pts else np.empty((0, 2))
        return Scan(pts, self.anchor_pose, self.pose_id, len(self.frames))


def acquire_scan(world: World, state: DroneState, geom: SensorGeometry, noise: NoiseModel,
                 rng: np.random.Generator, pose_id=None, dt: float = TICK_DT
                 ) -> tuple[Scan, DroneState]:
    """Hover at the current position and acquire one full scan.

    Every frame is projected with the estimate at its own capture instant.
    Returns the scan and the drone state after the spin.
    """
    from dataclasses import replace

    scanner = SpinScanner(state.est_pose, pose_id, dt)
    state = replace(state, velocity_cmd=(0.0, 0.0))
    while not scanner.done:
        rate, want = scanner.command()
        if want:
            pixels, validity = capture(world, state.true_pose, geom, noise, rng)
            d, ok = reduce_capture(pixels, validity)
            scanner.add_frame(project_frame(state.est_pose, d, ok, geom), state.est_pose)
        state = step(replace(state, yaw_rate_cmd=rate), world, dt, noise, rng)
        scanner.advance()
    state = replace(state, yaw_rate_cmd=0.0)
    return scanner.result(), state


def scan_transform(scan: Scan) -> Transform2D:
    return scan.anchor_pose.as_transform()
