"""Occupancy grid from a merged point cloud, and PGM input/output."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

UNKNOWN, FREE, OCCUPIED = 0, 1, 2
PGM_VALUES = {OCCUPIED: 0, FREE: 255, UNKNOWN: 128}


@dataclass
class OccupancyGrid:
    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray  # (rows, cols), row 0 at the lowest y

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        self.cells = np.asarray(self.cells, dtype=np.uint8)

    @property
    def shape(self):
        return self.cells.shape

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor((y - self.origin[1]) / self.resolution)),
                int(math.floor((x - self.origin[0]) / self.resolution)))

    def count(self, state: int) -> int:
        return int(np.sum(self.cells == state))


def _traverse(r0, c0, r1, c1):
    """Cells on the integer line from (r0, c0) to (r1, c1), end excluded."""
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    err = dc - dr
    r, c = r0, c0
    while (r, c) != (r1, c1):
        yield r, c
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr


def to_occupancy_grid(points, origins=None, resolution: float = 0.1, min_hits: int = 3,
                      padding: int = 1) -> OccupancyGrid:
    """Cells with at least ``min_hits`` points are OCCUPIED; cells crossed
    by an origin-to-point ray and not occupied become FREE."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    org = None if origins is None else np.asarray(origins, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return OccupancyGrid(resolution, (0.0, 0.0), np.zeros((1, 1), dtype=np.uint8))
    if not np.all(np.isfinite(pts)):
        raise ValueError("map points must be finite")
    every = pts if org is None else np.vstack([pts, org])
    lo = np.floor(every.min(axis=0) / resolution) - padding
    hi = np.floor(every.max(axis=0) / resolution) + padding
    origin = (float(lo[0] * resolution), float(lo[1] * resolution))
    shape = (int(hi[1] - lo[1]) + 1, int(hi[0] - lo[0]) + 1)
    grid = OccupancyGrid(resolution, origin, np.zeros(shape, dtype=np.uint8))
    idx = np.floor((pts - np.array(origin)) / resolution).astype(int)
    hits = np.zeros(shape, dtype=np.int64)
    np.add.at(hits, (idx[:, 1], idx[:, 0]), 1)
    occupied = hits >= min_hits
    cells = np.where(occupied, OCCUPIED, UNKNOWN).astype(np.uint8)
    if org is not None:
        oidx = np.floor((org - np.array(origin)) / resolution).astype(int)
        for (c1, r1), (c0, r0) in zip(idx, oidx):
            for r, c in _traverse(r0, c0, r1, c1):
                if not occupied[r, c]:
                    cells[r, c] = FREE
    grid.cells = cells
    return grid


def save_pgm(grid: OccupancyGrid, path) -> None:
    """Binary PGM, top image row = highest y."""
    img = np.vectorize(PGM_VALUES.get)(grid.cells).astype(np.uint8)[::-1]
    h, w = img.shape
    try:
        with open(path, "wb") as f:
            f.write(f"P5\n# resolution {grid.resolution} origin {grid.origin[0]} {grid.origin[1]}\n{w} {h}\n255\n".encode())
            f.write(img.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write PGM {path}: {exc}") from exc


def load_pgm(path) -> OccupancyGrid:
    data = Path(path).read_bytes()
    tokens, comments, pos = [], [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            end = data.index(b"\n", pos)
            comments.append(data[pos + 1:end].decode().split())
            pos = end + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode())
    pos += 1
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    img = np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)[::-1]
    res, origin = 0.1, (0.0, 0.0)
    for c in comments:
        if len(c) == 5 and c[0] == "resolution" and c[2] == "origin":
            res, origin = float(c[1]), (float(c[3]), float(c[4]))
    inv = {v: k for k, v in PGM_VALUES.items()}
    cells = np.vectorize(lambda v: inv.get(int(v), UNKNOWN))(img).astype(np.uint8)
    return OccupancyGrid(res, origin, cells)
