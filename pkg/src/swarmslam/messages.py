"""Application message bodies carried by the transport."""
from __future__ import annotations

import struct
from enum import IntEnum

import numpy as np

from .geometry import Pose2D
from .net import SR_MAX_BYTES, Message, Tag
from .posegraph import PoseId

SR_HEADER_BYTES = 6
SR_MAX_POINTS = (SR_MAX_BYTES - SR_HEADER_BYTES) // 4  # 285


class Command(IntEnum):
    TAKEOFF = 1
    LAND = 2
    ELECT_MAIN = 3


def pack_pose_id(pid: PoseId) -> bytes:
    return bytes([pid.drone]) + int(pid.index).to_bytes(3, "little")


def unpack_pose_id(raw: bytes) -> PoseId:
    return PoseId(raw[0], int.from_bytes(raw[1:4], "little"))


def f32(v: float) -> float:
    return float(np.float32(v))


def f32_pose(p: Pose2D) -> Pose2D:
    """The pose exactly as it survives a PUM round trip."""
    return Pose2D(f32(p.x), f32(p.y), f32(p.psi))


def encode_pum(pid: PoseId, pose: Pose2D) -> Message:
    return Message(Tag.POSE_UPDATE, pack_pose_id(pid) + struct.pack("<fff", pose.x, pose.y, pose.psi))


def decode_pum(msg: Message) -> tuple[PoseId, Pose2D]:
    x, y, psi = struct.unpack("<fff", msg.body[4:16])
    return unpack_pose_id(msg.body), Pose2D(x, y, psi)


def encode_tsr(pid: PoseId) -> Message:
    return Message(Tag.TOF_SCAN_REQUEST, pack_pose_id(pid))


def decode_tsr(msg: Message) -> PoseId:
    return unpack_pose_id(msg.body)


def downsample(points: np.ndarray, max_points: int = SR_MAX_POINTS) -> np.ndarray:
    if len(points) <= max_points:
        return points
    idx = np.round(np.linspace(0, len(points) - 1, max_points)).astype(int)
    return points[idx]


def encode_sr(pid: PoseId, local_points) -> Message:
    """Scan response: anchor-frame points as int16 millimetres."""
    pts = downsample(np.asarray(local_points, dtype=float).reshape(-1, 2))
    mm = np.clip(np.round(pts * 1000.0), -32768, 32767).astype("<i2")
    body = pack_pose_id(pid) + struct.pack("<H", len(mm)) + mm.tobytes()
    return Message(Tag.TOF_SCAN_RESPONSE, body)


def decode_sr(msg: Message) -> tuple[PoseId, np.ndarray]:
    body = msg.body
    (count,) = struct.unpack("<H", body[4:6])
    if len(body) != SR_HEADER_BYTES + 4 * count:
        raise ValueError(f"scan response declares {count} points but has {len(body)} bytes")
    mm = np.frombuffer(body[6:], dtype="<i2").reshape(-1, 2)
    return unpack_pose_id(body), mm.astype(float) / 1000.0


def encode_control(command: Command, params: bytes = b"") -> Message:
    if len(params) > 15:
        raise ValueError("control parameters are at most 15 bytes")
    return Message(Tag.CONTROL, bytes([int(command)]) + params.ljust(15, b"\0"))


def decode_control(msg: Message) -> tuple[Command, bytes]:
    return Command(msg.body[0]), msg.body[1:]
