"""File exports: clouds, trajectories, graphs, scan dumps and SVG figures."""
from __future__ import annotations

import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def _write(path, text: str) -> Path:
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def cloud_csv(points) -> str:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return "x,y\n" + "".join(f"{x!r},{y!r}\n" for x, y in pts.tolist())


def scan_dump_csv(scans) -> str:
    """``pose_id,x,y`` rows in each scan's anchor frame; pose_id is drone<<24|index."""
    rows = ["pose_id,x,y"]
    for pid in sorted(scans):
        packed = (pid[0] << 24) | pid[1]
        for x, y in scans[pid].local_points().tolist():
            rows.append(f"{packed},{x!r},{y!r}")
    return "\n".join(rows) + "\n"


def load_scan_dump(text: str) -> dict[int, np.ndarray]:
    out: dict[int, list] = {}
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != "pose_id,x,y":
        raise ValueError("scan dump must start with header pose_id,x,y")
    for n, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"scan dump line {n}: expected 3 fields")
        out.setdefault(int(parts[0]), []).append((float(parts[1]), float(parts[2])))
    return {k: np.array(v) for k, v in out.items()}


def write_json(path, obj) -> Path:
    return _write(path, json.dumps(obj, indent=1, sort_keys=False) + "\n")


def svg(walls=None, trajectories=None, cloud=None, size: float = 600.0, margin: float = 0.3) -> str:
    """Walls as lines, one polyline per trajectory, cloud as dots."""
    walls = np.zeros((0, 4)) if walls is None else np.asarray(walls, dtype=float).reshape(-1, 4)
    trajectories = trajectories or {}
    cloud = np.zeros((0, 2)) if cloud is None else np.asarray(cloud, dtype=float).reshape(-1, 2)
    xs = [walls[:, 0], walls[:, 2], cloud[:, 0]] + [np.asarray(t)[:, 0] for t in trajectories.values()]
    ys = [walls[:, 1], walls[:, 3], cloud[:, 1]] + [np.asarray(t)[:, 1] for t in trajectories.values()]
    xs = np.concatenate([x for x in xs if len(x)] or [np.zeros(1)])
    ys = np.concatenate([y for y in ys if len(y)] or [np.zeros(1)])
    x0, x1 = xs.min() - margin, xs.max() + margin
    y0, y1 = ys.min() - margin, ys.max() + margin
    scale = size / max(x1 - x0, y1 - y0, 1e-9)
    w, h = (x1 - x0) * scale, (y1 - y0) * scale

    def px(x, y):
        return (x - x0) * scale, (y1 - y) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" '
           f'viewBox="0 0 {w:.1f} {h:.1f}">', '<rect width="100%" height="100%" fill="white"/>']
    out.append('<g id="walls" stroke="black" stroke-width="3">')
    for a, b, c, d in walls.tolist():
        (u0, v0), (u1, v1) = px(a, b), px(c, d)
        out.append(f'<line x1="{u0:.2f}" y1="{v0:.2f}" x2="{u1:.2f}" y2="{v1:.2f}"/>')
    out.append("</g>")
    if len(cloud):
        out.append('<g id="cloud" fill="#555">')
        for x, y in cloud.tolist():
            u, v = px(x, y)
            out.append(f'<circle cx="{u:.2f}" cy="{v:.2f}" r="1.2"/>')
        out.append("</g>")
    for i, (name, traj) in enumerate(sorted(trajectories.items())):
        pts = " ".join("{:.2f},{:.2f}".format(*px(x, y)) for x, y in np.asarray(traj)[:, :2].tolist())
        out.append(f'<polyline id="drone-{escape(str(name))}" fill="none" stroke="{COLORS[i % len(COLORS)]}" '
                   f'stroke-width="1.5" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
