"""Pose-graph SLAM back-end: odometry and virtual edges, Gauss-Newton."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .geometry import Pose2D, RelativeMeasurement, integrate, wrap_angle

log = logging.getLogger(__name__)

VIRTUAL_INFORMATION = 20.0
MAX_DRONE_ID = 14
MAX_LOCAL_INDEX = 2**24 - 1


class GraphError(RuntimeError):
    pass


class BudgetExceeded(GraphError):
    pass


class DuplicateId(GraphError):
    pass


class SingularSystem(GraphError):
    pass


class PoseId(NamedTuple):
    drone: int
    index: int

    @classmethod
    def make(cls, drone: int, index: int) -> "PoseId":
        if not 0 <= drone <= MAX_DRONE_ID:
            raise ValueError(f"drone id {drone} outside 0..{MAX_DRONE_ID}")
        if not 0 <= index <= MAX_LOCAL_INDEX:
            raise ValueError(f"local index {index} outside 0..{MAX_LOCAL_INDEX}")
        return cls(drone, index)

    def packed(self) -> int:
        return (self.drone << 24) | self.index

    @classmethod
    def unpack(cls, value: int) -> "PoseId":
        return cls(value >> 24, value & MAX_LOCAL_INDEX)


class EdgeKind(str, Enum):
    ODOMETRY = "ODOMETRY"
    VIRTUAL = "VIRTUAL"


@dataclass(frozen=True)
class GraphEdge:
    src: PoseId
    dst: PoseId
    measurement: RelativeMeasurement
    kind: EdgeKind = EdgeKind.ODOMETRY

    @property
    def information_scale(self) -> float:
        return VIRTUAL_INFORMATION if self.kind is EdgeKind.VIRTUAL else 1.0


@dataclass(frozen=True)
class MemoryBudget:
    """Accounting model of on-board RAM for the pose graph and its solver.

    ``usage = per_pose * N + per_edge * E + fill_per_pose_constraint * N * C``
    where the last term stands for solver fill-in that every loop
    constraint adds along the poses it couples.
    """

    limit_bytes: int = 50 * 1024
    per_pose_bytes: int = 16
    per_edge_bytes: int = 28
    fill_per_pose_constraint_bytes: float = 7.55
    reserved_constraints: int = 0  # constraints budgeted for before they exist

    def usage(self, n_poses: int, n_edges: int, n_constraints: int) -> float:
        n_constraints = max(n_constraints, self.reserved_constraints)
        return (self.per_pose_bytes * n_poses + self.per_edge_bytes * n_edges
                + self.fill_per_pose_constraint_bytes * n_poses * n_constraints)

    def max_poses(self, n_constraints: int, n_anchors: int = 1) -> int:
        n = 0
        while self.usage(n + 1, n + 1 - n_anchors + n_constraints, n_constraints) <= self.limit_bytes:
            n += 1
        return n


@dataclass
class OptimizationReport:
    initial_objective: float
    final_objective: float
    iterations: int
    converged: bool
    halvings: int = 0
    objective_history: list[float] = field(default_factory=list)


class PoseGraph:
    """Pose nodes with odometry/virtual edges; one anchor per drone."""

    def __init__(self, budget: MemoryBudget | None = None):
        self.nodes: dict[PoseId, Pose2D] = {}
        self.edges: list[GraphEdge] = []
        self.anchors: list[PoseId] = []
        self.budget = budget
        self._last: dict[int, PoseId] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def n_virtual(self) -> int:
        return sum(e.kind is EdgeKind.VIRTUAL for e in self.edges)

    def _check_budget(self, d_poses: int, d_edges: int, d_constraints: int) -> None:
        if self.budget is None:
            return
        usage = self.budget.usage(len(self.nodes) + d_poses, len(self.edges) + d_edges,
                                  self.n_virtual + d_constraints)
        if usage > self.budget.limit_bytes:
            raise BudgetExceeded(
                f"projected {usage:.0f} bytes exceeds budget of {self.budget.limit_bytes} bytes")

    def add_anchor(self, pid: PoseId, pose: Pose2D) -> None:
        pid = PoseId(*pid)
        if pid in self.nodes:
            raise DuplicateId(f"pose {pid} already present")
        self._check_budget(1, 0, 0)
        self.nodes[pid] = pose
        self.anchors.append(pid)
        self._last[pid.drone] = pid

    def add_pose(self, pid: PoseId, odometry: RelativeMeasurement) -> Pose2D:
        """Append a pose after the drone's previous one and its odometry edge."""
        pid = PoseId(*pid)
        if pid in self.nodes:
            raise DuplicateId(f"pose {pid} already present")
        prev = self._last.get(pid.drone)
        if prev is None:
            raise GraphError(f"drone {pid.drone} has no anchor pose")
        if pid.index <= prev.index:
            raise GraphError(f"local index must increase: {pid} after {prev}")
        self._check_budget(1, 1, 0)
        pose = integrate(self.nodes[prev], odometry)
        self.nodes[pid] = pose
        self.edges.append(GraphEdge(prev, pid, odometry, EdgeKind.ODOMETRY))
        self._last[pid.drone] = pid
        return pose

    def add_virtual_edge(self, src: PoseId, dst: PoseId, icp_result) -> GraphEdge:
        """Add a loop-closure edge from a converged ICP result ``src -> dst``."""
        if not icp_result.converged:
            raise GraphError("refusing virtual edge from an unconverged ICP result")
        t = icp_result.transform
        return self.add_constraint(src, dst, RelativeMeasurement(t.tx, t.ty, t.theta))

    def add_constraint(self, src: PoseId, dst: PoseId, z: RelativeMeasurement) -> GraphEdge:
        src, dst = PoseId(*src), PoseId(*dst)
        for p in (src, dst):
            if p not in self.nodes:
                raise GraphError(f"unknown pose {p}")
        self._check_budget(0, 1, 1)
        edge = GraphEdge(src, dst, z, EdgeKind.VIRTUAL)
        self.edges.append(edge)
        return edge

    def components(self) -> list[set[PoseId]]:
        parent = {p: p for p in self.nodes}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in self.edges:
            ra, rb = find(e.src), find(e.dst)
            if ra != rb:
                parent[ra] = rb
        groups: dict[PoseId, set[PoseId]] = {}
        for p in self.nodes:
            groups.setdefault(find(p), set()).add(p)
        return list(groups.values())

    def copy(self) -> "PoseGraph":
        g = PoseGraph(self.budget)
        g.nodes = dict(self.nodes)
        g.edges = list(self.edges)
        g.anchors = list(self.anchors)
        g._last = dict(self._last)
        return g

    def to_dict(self) -> dict:
        return {
            "anchors": [list(a) for a in self.anchors],
            "nodes": [{"drone": p.drone, "index": p.index, "x": q.x, "y": q.y, "psi": q.psi}
                      for p, q in self.nodes.items()],
            "edges": [{"from": list(e.src), "to": list(e.dst), "dx": e.measurement.dx,
                       "dy": e.measurement.dy, "dpsi": e.measurement.dpsi, "kind": e.kind.value}
                      for e in self.edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict, budget: MemoryBudget | None = None) -> "PoseGraph":
        g = cls(budget)
        for n in d["nodes"]:
            g.nodes[PoseId(int(n["drone"]), int(n["index"]))] = Pose2D(n["x"], n["y"], n["psi"])
        anchors = d.get("anchors")
        if anchors is None:
            firsts: dict[int, PoseId] = {}
            for p in g.nodes:
                if p.drone not in firsts or p.index < firsts[p.drone].index:
                    firsts[p.drone] = p
            anchors = list(firsts.values())
        g.anchors = [PoseId(int(a[0]), int(a[1])) for a in anchors]
        for e in d["edges"]:
            g.edges.append(GraphEdge(PoseId(*map(int, e["from"])), PoseId(*map(int, e["to"])),
                                     RelativeMeasurement(e["dx"], e["dy"], e["dpsi"]),
                                     EdgeKind(e["kind"])))
        for p in g.nodes:
            last = g._last.get(p.drone)
            if last is None or p.index > last.index:
                g._last[p.drone] = p
        return g

    @classmethod
    def from_json(cls, text: str) -> "PoseGraph":
        return cls.from_dict(json.loads(text))


def edge_error(xi: np.ndarray, xj: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``z - zhat(xi, xj)`` with the angle residual wrapped."""
    c, s = math.cos(xi[2]), math.sin(xi[2])
    dx, dy = xj[0] - xi[0], xj[1] - xi[1]
    zhat = (c * dx + s * dy, -s * dx + c * dy)
    return np.array([z[0] - zhat[0], z[1] - zhat[1], wrap_angle(z[2] - (xj[2] - xi[2]))])


def _edge_linearization(xi, xj, z):
    """Error and Jacobians of the error w.r.t. xi and xj."""
    c, s = math.cos(xi[2]), math.sin(xi[2])
    dx, dy = xj[0] - xi[0], xj[1] - xi[1]
    e = np.array([z[0] - (c * dx + s * dy), z[1] - (-s * dx + c * dy),
                  wrap_angle(z[2] - (xj[2] - xi[2]))])
    # d zhat / d xi and d zhat / d xj; the error Jacobians are their negatives
    a = np.array([[-c, -s, -s * dx + c * dy],
                  [s, -c, -c * dx - s * dy],
                  [0.0, 0.0, -1.0]])
    b = np.array([[c, s, 0.0],
                  [-s, c, 0.0],
                  [0.0, 0.0, 1.0]])
    return e, -a, -b


def objective(graph: PoseGraph, values: dict[PoseId, np.ndarray] | None = None) -> float:
    total = 0.0
    for e in graph.edges:
        xi = values[e.src] if values else graph.nodes[e.src].as_array()
        xj = values[e.dst] if values else graph.nodes[e.dst].as_array()
        r = edge_error(xi, xj, e.measurement.as_array())
        total += e.information_scale * float(r @ r)
    return total


def build_system(graph: PoseGraph, values: dict[PoseId, np.ndarray], index: dict[PoseId, int]):
    """Normal equations ``H dx = -b`` over the free (non-anchor) poses."""
    n = 3 * len(index)
    h = np.zeros((n, n))
    b = np.zeros(n)
    for edge in graph.edges:
        e, ja, jb = _edge_linearization(values[edge.src], values[edge.dst], edge.measurement.as_array())
        w = edge.information_scale
        ia, ib = index.get(edge.src), index.get(edge.dst)
        for i1, j1 in ((ia, ja), (ib, jb)):
            if i1 is None:
                continue
            s1 = slice(3 * i1, 3 * i1 + 3)
            b[s1] += w * j1.T @ e
            for i2, j2 in ((ia, ja), (ib, jb)):
                if i2 is None:
                    continue
                h[s1, 3 * i2:3 * i2 + 3] += w * j1.T @ j2
    return h, b


def optimize(graph: PoseGraph, max_gn_iterations: int = 10, step_tol: float = 1e-4,
             max_halvings: int = 5) -> tuple[PoseGraph, OptimizationReport]:
    """Gauss-Newton over all non-anchor poses.

    A graph without virtual edges is returned unchanged: forward
    integration already satisfies every odometry edge. Steps that would
    raise the objective are halved up to ``max_halvings`` times.
    """
    if graph.n_virtual == 0:
        f0 = objective(graph)
        return graph.copy(), OptimizationReport(f0, f0, 0, True, 0, [f0])
    anchors = set(graph.anchors)
    free = [p for p in graph.nodes if p not in anchors]
    index = {p: k for k, p in enumerate(free)}
    values = {p: q.as_array() for p, q in graph.nodes.items()}
    f = objective(graph, values)
    history = [f]
    f0 = f
    converged = False
    halvings_total = 0
    it = 0
    for it in range(1, max_gn_iterations + 1):
        h, b = build_system(graph, values, index)
        try:
            chol = np.linalg.cholesky(h)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("normal equations are not positive definite "
                                 "(is every pose connected to an anchor?)") from exc
        y = np.linalg.solve(chol, -b)
        dx = np.linalg.solve(chol.T, y)
        alpha = 1.0
        for _ in range(max_halvings + 1):
            trial = dict(values)
            for p, k in index.items():
                v = values[p] + alpha * dx[3 * k:3 * k + 3]
                v[2] = wrap_angle(v[2])
                trial[p] = v
            f_trial = objective(graph, trial)
            if f_trial <= f:
                break
            alpha *= 0.5
            halvings_total += 1
        else:
            converged = True
            break
        values, f = trial, f_trial
        history.append(f)
        if float(np.max(np.abs(alpha * dx))) < step_tol:
            converged = True
            break
    out = graph.copy()
    for p in free:
        v = values[p]
        out.nodes[p] = Pose2D(v[0], v[1], v[2])
    return out, OptimizationReport(f0, f, it, converged, halvings_total, history)


def apply_correction(before: PoseGraph, after: PoseGraph, scans: dict) -> dict:
    """Re-anchor every stored scan at its optimised pose.

    ``scans`` maps PoseId to :class:`~swarmslam.sensing.Scan`; returns a
    new dict of corrected scans. Poses without a scan are skipped.
    """
    out = {}
    for pid in before.nodes:
        scan = scans.get(pid)
        if scan is None:
            log.warning("no scan stored for pose %s; skipped", pid)
            continue
        out[pid] = scan.reanchored(after.nodes[pid])
    return out


def system_size(graph: PoseGraph) -> int:
    """Dimension of the Gauss-Newton system."""
    return 3 * (len(graph.nodes) - len(set(graph.anchors)))
