"""Swarm mission: exploring drones, the main drone's scan matching and SLAM.

Everything runs on one deterministic 15 Hz engine tick. Each tick the
network is advanced to the tick time, then every drone is updated in
ascending address order, then the trajectories are recorded.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import messages as m
from .explorer import ExplorerConfig, ExplorerState, Phase, decide, set_waypoint
from .geometry import Pose2D, relative_pose
from .icp import IcpConfig, IcpError, icp
from .net import BROADCAST, ChannelModel, DeliveryReport, Message, Network, Tag
from .posegraph import (GraphError, MemoryBudget, OptimizationReport, PoseGraph, PoseId,
                        optimize)
from .sensing import (CENTER_ZONES, LOW_DENSITY_POINTS, Scan, SensorGeometry, SpinScanner, capture,
                      directional_minimum, project_frame, reduce_capture)
from .world import TICK_DT, DroneState, NoiseModel, TrajectoryRecorder, World, load_world, step

log = logging.getLogger(__name__)


class MissionError(ValueError):
    pass


class SlamTrigger(str, Enum):
    END_OF_MISSION = "END_OF_MISSION"
    EVERY_K_CLOSURES = "EVERY_K_CLOSURES"


@dataclass(frozen=True)
class DroneSpec:
    address: int
    start: Pose2D
    explorer: ExplorerConfig


@dataclass(frozen=True)
class Failure:
    address: int
    time: float | None = None
    after_poses: int | None = None


@dataclass
class MissionConfig:
    world: World
    drones: list[DroneSpec]
    main_drone: int
    seed: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)
    loss_prob: float = 0.0
    bridge: int | None = None
    loop_closure_radius: float = 0.75
    min_index_gap: int = 5
    loop_closure: bool = True
    slam_trigger: SlamTrigger = SlamTrigger.END_OF_MISSION
    slam_every_k: int = 5
    icp: IcpConfig = field(default_factory=IcpConfig)
    max_icp_residual: float = 0.08
    max_icp_correction: tuple[float, float] = (0.5, math.radians(20.0))
    icp_hover_delay: float = 0.0
    announce_landing: bool = True
    max_time: float = 1800.0
    failures: list[Failure] = field(default_factory=list)
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    memory_budget: MemoryBudget | None = None

    def __post_init__(self):
        addrs = [d.address for d in self.drones]
        if not addrs:
            raise MissionError("mission needs at least one drone")
        if len(set(addrs)) != len(addrs):
            raise MissionError(f"drone addresses must be unique, got {addrs}")
        every = addrs + ([self.bridge] if self.bridge is not None else [])
        if len(set(every)) != len(every):
            raise MissionError("bridge address collides with a drone address")
        for a in every:
            if not 0 <= a < BROADCAST:
                raise MissionError(f"address {a} outside 0..14")
        if self.main_drone not in addrs:
            raise MissionError(f"main drone {self.main_drone} is not one of the drones {addrs}")
        self.slam_trigger = SlamTrigger(self.slam_trigger)


def load_mission(document, base_dir: Path | None = None) -> MissionConfig:
    """Parse a mission JSON document (path, text or dict).

    Keys: ``world`` (path relative to the mission file, or inline maze),
    ``drones`` (``address``, ``start`` [x, y], ``heading_deg``,
    ``priority``, ``v_exp`` and optional explorer fields), ``main``,
    ``seed``, ``noise``, ``loss_prob`` and optional tuning fields.
    """
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        path = Path(document)
        base_dir = base_dir or path.parent
        try:
            document = path.read_text()
        except OSError as exc:
            raise MissionError(f"cannot read mission file {path}: {exc}") from exc
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MissionError(f"mission JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    else:
        data = dict(document)
    base_dir = Path(base_dir or ".")
    for key in ("world", "drones", "main"):
        if key not in data:
            raise MissionError(f"mission document missing field {key!r}")
    w = data["world"]
    if isinstance(w, str):
        p = Path(w)
        if not p.is_absolute():
            p = base_dir / p
        if not p.exists():
            from importlib import resources

            packaged = resources.files("swarmslam") / "data" / Path(w).name
            if packaged.is_file():
                p = Path(str(packaged))
        world = load_world(p)
    else:
        world = load_world(w)
    drones = []
    explorer_fields = set(ExplorerConfig.__dataclass_fields__)
    for i, d in enumerate(data["drones"]):
        try:
            start = d["start"]
            heading = math.radians(float(d.get("heading_deg", 0.0)))
            extra = {k: v for k, v in d.items() if k in explorer_fields}
            if "priority" in d:
                extra["steering_priority"] = d["priority"]
            cfg = ExplorerConfig(**extra)
            drones.append(DroneSpec(int(d["address"]), Pose2D(float(start[0]), float(start[1]), heading), cfg))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise MissionError(f"drones[{i}] is invalid: {exc}") from exc
    failures = [Failure(int(f["address"]), f.get("time"), f.get("after_poses"))
                for f in data.get("failures", [])]
    optional = {}
    for key in ("loop_closure_radius", "min_index_gap", "loop_closure", "slam_trigger", "slam_every_k",
                "max_icp_residual", "icp_hover_delay", "announce_landing", "max_time", "bridge"):
        if key in data:
            optional[key] = data[key]
    if data.get("memory_budget"):
        optional["memory_budget"] = MemoryBudget()
    try:
        return MissionConfig(world=world, drones=drones, main_drone=int(data["main"]),
                             seed=int(data.get("seed", 0)), noise=NoiseModel.from_dict(data.get("noise")),
                             loss_prob=float(data.get("loss_prob", 0.0)), failures=failures, **optional)
    except (TypeError, ValueError) as exc:
        raise MissionError(str(exc)) from exc


@dataclass
class MatchTask:
    a: PoseId  # the smaller pose id; the edge runs a -> b
    b: PoseId
    scans: dict = field(default_factory=dict)


class Agent:
    """One swarm member: its flight state, own scans and replicated pose table."""

    def __init__(self, address: int, spec: DroneSpec | None, cfg: MissionConfig, engine: "Engine"):
        self.address = address
        self.spec = spec
        self.cfg = cfg
        self.engine = engine
        self.is_bridge = spec is None
        seq = np.random.SeedSequence([cfg.seed, address])
        self.rng = np.random.default_rng(seq)
        self.main = cfg.main_drone
        self.failed = False
        self.flying = False
        self.landed = self.is_bridge
        self.table: dict[PoseId, Pose2D] = {}
        self.raw: dict[PoseId, Pose2D] = {}
        self.arrival: list[PoseId] = []
        self.scans: dict[PoseId, Scan] = {}
        self.true_at_pose: dict[PoseId, Pose2D] = {}
        self.deferred: list[tuple[PoseId, int]] = []
        self.known_failed: set[int] = set()
        self.next_index = 0
        self.last_pid: PoseId | None = None
        self.scanner: SpinScanner | None = None
        self.hover_until = -math.inf
        if spec is not None:
            self.state = DroneState.at(spec.start)
            self.explorer = ExplorerState.start(spec.start, spec.explorer)
        # main-drone role
        self.graph: PoseGraph | None = None
        self.tasks: list[MatchTask] = []
        self.requested: set[PoseId] = set()
        self.closures = 0
        self.rejected = 0
        self.slam_done = False
        self.graph_pre: PoseGraph | None = None
        self.report: OptimizationReport | None = None
        if self.address == self.main:
            self.become_main(initial=True)

    # --- roles ---------------------------------------------------------------
    @property
    def is_main(self) -> bool:
        return self.main == self.address and not self.failed

    def become_main(self, initial: bool = False) -> None:
        self.main = self.address
        self.graph = PoseGraph(self.cfg.memory_budget)
        self.tasks = []
        self.requested = set()
        for pid in list(self.arrival):
            self._graph_insert(pid)
        if not initial:
            log.info("drone %d takes over as main with %d poses", self.address, len(self.graph))
            seen = []
            for pid in self.arrival:
                self._maybe_task(pid, seen)
                seen.append(pid)

    def _graph_insert(self, pid: PoseId) -> None:
        raw = self.raw[pid]
        if pid.index == 0:
            self.graph.add_anchor(pid, raw)
            return
        prev = PoseId(pid.drone, pid.index - 1)
        if prev not in self.graph.nodes:
            log.warning("main %d: pose %s arrived without its predecessor", self.address, pid)
            return
        self.graph.add_pose(pid, relative_pose(self.raw[prev], raw))

    # --- pose table ----------------------------------------------------------
    def register_pose(self, pid: PoseId, pose: Pose2D) -> None:
        pose = m.f32_pose(pose)
        new = pid not in self.table
        self.table[pid] = pose
        if not new:
            return
        self.raw[pid] = pose
        if self.is_main:
            self._graph_insert(pid)
            self._maybe_task(pid, self.arrival)
        self.arrival.append(pid)

    def _maybe_task(self, pid: PoseId, candidates) -> None:
        """Queue a scan match against every stored pose within the radius.

        Every qualifying pair is matched once, when its later pose arrives,
        and oriented by pose id, so the resulting edges do not depend on
        the order in which PUMs reach the main drone.
        """
        if not self.cfg.loop_closure or pid not in self.graph.nodes:
            return
        p = self.raw[pid]
        found = []
        for q in candidates:
            if q == pid or q.drone in self.known_failed or q not in self.graph.nodes:
                continue
            if q.drone == pid.drone and abs(q.index - pid.index) < self.cfg.min_index_gap:
                continue
            r = self.raw[q]
            if math.hypot(r.x - p.x, r.y - p.y) <= self.cfg.loop_closure_radius:
                found.append(q)
        for q in sorted(found):
            a, b = min(q, pid), max(q, pid)
            self.tasks.append(MatchTask(a, b))
            for need in (a, b):
                self._fetch(need)
        if found:
            self._run_ready_tasks()

    def _fetch(self, pid: PoseId) -> None:
        if pid.drone == self.address:
            return  # own scan; filled in when available
        if pid in self.requested:
            return
        if pid.drone in self.known_failed:
            self._drop_tasks_needing(pid, "owner failed")
            return
        self.requested.add(pid)
        self.engine.net.send(self.address, m.encode_tsr(pid), pid.drone)

    def _drop_tasks_needing(self, pid: PoseId, why: str) -> None:
        keep = []
        for t in self.tasks:
            if pid in (t.a, t.b):
                log.info("main %d: dropped match task %s-%s (%s)", self.address, t.a, t.b, why)
            else:
                keep.append(t)
        self.tasks = keep

    def _scan_arrived(self, pid: PoseId, local: np.ndarray) -> None:
        self.requested.discard(pid)
        for t in self.tasks:
            if pid in (t.a, t.b):
                t.scans[pid] = local
        self._run_ready_tasks()

    def _own_scan(self, pid: PoseId):
        scan = self.scans.get(pid)
        if scan is None:
            return None
        # same encoding as a remote scan so every main sees identical data
        return m.decode_sr(m.encode_sr(pid, scan.local_points()))[1]

    def _run_ready_tasks(self) -> None:
        if not self.is_main:
            return
        remaining = []
        for t in self.tasks:
            for pid in (t.a, t.b):
                if pid not in t.scans and pid.drone == self.address:
                    local = self._own_scan(pid)
                    if local is not None:
                        t.scans[pid] = local
            if len(t.scans) == 2:
                self._match(t)
            else:
                remaining.append(t)
        self.tasks = remaining

    def _match(self, t: MatchTask) -> None:
        pa, pb = t.scans[t.a], t.scans[t.b]
        if len(pa) < LOW_DENSITY_POINTS or len(pb) < LOW_DENSITY_POINTS:
            self.rejected += 1
            return
        guess = relative_pose(self.raw[t.a], self.raw[t.b]).as_transform()
        try:
            res = icp(pb, pa, guess, self.cfg.icp)
        except IcpError as exc:
            log.info("main %d: ICP %s-%s failed: %s", self.address, t.a, t.b, exc)
            self.rejected += 1
            return
        z = res.transform
        dt_max, dr_max = self.cfg.max_icp_correction
        moved = math.hypot(z.tx - guess.tx, z.ty - guess.ty)
        turned = abs(math.remainder(z.theta - guess.theta, 2 * math.pi))
        if (not res.converged or res.mean_residual > self.cfg.max_icp_residual
                or moved > dt_max or turned > dr_max):
            self.rejected += 1
            return
        try:
            self.graph.add_virtual_edge(t.a, t.b, res)
        except GraphError as exc:
            log.warning("main %d: virtual edge rejected: %s", self.address, exc)
            self.rejected += 1
            return
        self.closures += 1
        self.engine.closure_log.append((self.engine.time, t.a, t.b))
        if self.cfg.icp_hover_delay > 0:
            self.hover_until = self.engine.time + self.cfg.icp_hover_delay
        if (self.cfg.slam_trigger is SlamTrigger.EVERY_K_CLOSURES
                and self.closures % self.cfg.slam_every_k == 0):
            self.run_slam(final=False)

    def run_slam(self, final: bool = True) -> None:
        """Optimise the global graph and broadcast every changed pose."""
        if final:
            self.graph_pre = self.graph.copy()
        opt, report = optimize(self.graph)
        self.report = report
        for pid in sorted(opt.nodes):
            pose = opt.nodes[pid]
            if m.f32_pose(pose) != self.table.get(pid):
                self.table[pid] = m.f32_pose(pose)
                self.engine.net.send(self.address, m.encode_pum(pid, pose))
        if final:
            self.graph_post = opt
            self.slam_done = True

    # --- network callbacks ----------------------------------------------------
    def on_message(self, src: int, msg: Message) -> None:
        if self.failed:
            return
        if msg.tag is Tag.POSE_UPDATE:
            pid, pose = m.decode_pum(msg)
            self.register_pose(pid, pose)
        elif msg.tag is Tag.TOF_SCAN_REQUEST:
            pid = m.decode_tsr(msg)
            if pid in self.scans:
                self.engine.net.send(self.address, m.encode_sr(pid, self.scans[pid].local_points()), src)
            elif pid.drone == self.address:
                self.deferred.append((pid, src))
            else:
                log.warning("drone %d: scan request for unknown pose %s", self.address, pid)
        elif msg.tag is Tag.TOF_SCAN_RESPONSE:
            pid, local = m.decode_sr(msg)
            if self.is_main:
                self._scan_arrived(pid, local)
        elif msg.tag is Tag.CONTROL:
            cmd, params = m.decode_control(msg)
            if cmd is m.Command.TAKEOFF:
                self.flying = not self.is_bridge
            elif cmd is m.Command.LAND:
                pass
            elif cmd is m.Command.ELECT_MAIN:
                new, failed = params[0], params[1]
                self._peer_failed(failed, elect=False)
                self.main = new

    def on_report(self, report: DeliveryReport) -> None:
        if self.failed:
            return
        for f in sorted(report.failed):
            self._peer_failed(f, elect=True)

    def _peer_failed(self, addr: int, elect: bool) -> None:
        if addr in self.known_failed or addr == self.address:
            return
        self.known_failed.add(addr)
        self.engine.net.forget_peer(self.address, addr)
        if self.is_main:
            for pid in [p for p in self.requested if p.drone == addr]:
                self.requested.discard(pid)
                self._drop_tasks_needing(pid, "owner failed")
        if elect and addr == self.main:
            candidates = sorted(a for a in self.engine.flyer_addresses
                                if a not in self.known_failed)
            if candidates and candidates[0] == self.address:
                self.become_main()
                self.engine.net.send(self.address, m.encode_control(
                    m.Command.ELECT_MAIN, bytes([self.address, addr])))
                self.engine.main_history.append((self.engine.time, self.address))
            elif candidates:
                self.main = candidates[0]

    # --- flight ---------------------------------------------------------------
    def _add_pose(self) -> None:
        pid = PoseId.make(self.address, self.next_index)
        self.next_index += 1
        pose = self.state.est_pose
        self.last_pid = pid
        self.true_at_pose[pid] = self.state.true_pose
        self.register_pose(pid, pose)
        self.engine.net.send(self.address, m.encode_pum(pid, pose))
        self.scanner = SpinScanner(pose, pid, TICK_DT)
        self.explorer = replace(self.explorer, phase=Phase.SCANNING)

    def _finish_scan(self) -> None:
        scan = self.scanner.result()
        pid = scan.pose_id
        self.scans[pid] = scan
        self.scanner = None
        self.state = replace(self.state, yaw_rate_cmd=0.0)
        for want, requester in [d for d in self.deferred if d[0] == pid]:
            self.engine.net.send(self.address, m.encode_sr(pid, scan.local_points()), requester)
        self.deferred = [d for d in self.deferred if d[0] != pid]
        if self.is_main:
            self._run_ready_tasks()
        limit = self.spec.explorer.max_waypoints
        if limit is not None and pid.index >= limit:
            self._land()
            return
        self.explorer = replace(set_waypoint(self.explorer, self.state.est_pose, self.spec.explorer),
                                phase=Phase.EXPLORING)

    def _land(self) -> None:
        self.landed = True
        self.explorer = replace(self.explorer, phase=Phase.LANDED)
        self.state = replace(self.state, velocity_cmd=(0.0, 0.0), yaw_rate_cmd=0.0)
        self.engine.land_times[self.address] = self.engine.time
        if self.cfg.announce_landing:
            self.engine.net.send(self.address, m.encode_control(m.Command.LAND))

    def tick(self, dt: float) -> None:
        if self.failed or self.landed or not self.flying:
            return
        world, noise, geom = self.cfg.world, self.cfg.noise, self.cfg.geometry
        if self.next_index == 0:
            self._add_pose()
        if self.explorer.phase is Phase.SCANNING:
            rate, want = self.scanner.command()
            if want:
                pixels, validity = capture(world, self.state.true_pose, geom, noise, self.rng)
                d, ok = reduce_capture(pixels, validity)
                self.scanner.add_frame(project_frame(self.state.est_pose, d, ok, geom), self.state.est_pose)
            self.state = step(replace(self.state, velocity_cmd=(0.0, 0.0), yaw_rate_cmd=rate),
                              world, dt, noise, self.rng)
            self.scanner.advance()
            if self.scanner.done:
                self._finish_scan()
            return
        vel = (0.0, 0.0)
        if self.engine.time >= self.hover_until:
            pixels, validity = capture(world, self.state.true_pose, geom, noise, self.rng)
            d, ok = reduce_capture(pixels, validity)
            dec = decide(self.explorer, self.state.est_pose, directional_minimum(d, ok), dt,
                         self.spec.explorer, directional_minimum(d, ok, CENTER_ZONES))
            self.explorer = dec.state
            if dec.event == "landed":
                self._land()
                return
            if dec.event == "waypoint" or (dec.event == "turn" and self._pose_on_turn()):
                self._add_pose()
                self.tick_scan_start(dt)
                return
            vel = dec.velocity
        self.state = step(replace(self.state, velocity_cmd=vel, yaw_rate_cmd=0.0),
                          world, dt, self.cfg.noise, self.rng)

    def _pose_on_turn(self) -> bool:
        # a turn right after a waypoint reuses that waypoint's pose
        if not self.spec.explorer.pose_on_turn or self.last_pid is None:
            return self.spec.explorer.pose_on_turn
        last = self.raw[self.last_pid]
        est = self.state.est_pose
        return math.hypot(est.x - last.x, est.y - last.y) > 0.25

    def tick_scan_start(self, dt: float) -> None:
        """Hover for the rest of the tick in which a pose was added."""
        self.state = step(replace(self.state, velocity_cmd=(0.0, 0.0), yaw_rate_cmd=0.0),
                          self.cfg.world, dt, self.cfg.noise, self.rng)

    def fail(self) -> None:
        self.failed = True
        self.engine.net.fail(self.address)
        self.engine.fail_times[self.address] = self.engine.time


@dataclass
class MissionResult:
    config: MissionConfig
    graph_pre: PoseGraph
    graph_post: PoseGraph
    report: OptimizationReport | None
    truth: dict[PoseId, Pose2D]
    scans: dict[PoseId, Scan]
    trajectories: TrajectoryRecorder
    network: Network
    tables: dict[int, dict[PoseId, Pose2D]]
    main: int
    duration: float
    land_times: dict[int, float]
    closures: list
    rejected: int
    completed: bool

    @property
    def flight_time(self) -> float:
        """Time until the last drone landed."""
        return max(self.land_times.values()) if self.land_times else self.duration

    def pose_arrays(self, graph: PoseGraph | None = None):
        g = graph or self.graph_post
        ids = [p for p in sorted(g.nodes) if p in self.truth]
        est = np.array([[g.nodes[p].x, g.nodes[p].y] for p in ids]).reshape(-1, 2)
        gt = np.array([[self.truth[p].x, self.truth[p].y] for p in ids]).reshape(-1, 2)
        return est, gt

    def map_points(self, graph: PoseGraph | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Merged world-frame cloud and the sensor origin of each point."""
        pts, origins = [], []
        for pid in sorted(self.scans):
            scan = self.scans[pid]
            if graph is not None and pid in graph.nodes:
                scan = scan.reanchored(graph.nodes[pid])
            pts.append(scan.points)
            origins.append(np.repeat(scan.anchor_pose.xy[None, :], len(scan.points), axis=0))
        if not pts:
            return np.empty((0, 2)), np.empty((0, 2))
        return np.concatenate(pts), np.concatenate(origins)

    def graph_dict(self, graph: PoseGraph) -> dict:
        d = graph.to_dict()
        for n in d["nodes"]:
            t = self.truth.get(PoseId(n["drone"], n["index"]))
            if t is not None:
                n["true_x"], n["true_y"], n["true_psi"] = t.x, t.y, t.psi
        return d


class Engine:
    def __init__(self, cfg: MissionConfig):
        self.cfg = cfg
        self.time = 0.0
        self.ticks = 0
        self.flyer_addresses = sorted(d.address for d in cfg.drones)
        addrs = self.flyer_addresses + ([cfg.bridge] if cfg.bridge is not None else [])
        chan = ChannelModel(cfg.loss_prob, seed=cfg.seed)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC4A]))
        self.net = Network(addrs, chan, self._on_message, self._on_report, rng)
        self.closure_log: list = []
        self.main_history: list = [(0.0, cfg.main_drone)]
        self.land_times: dict[int, float] = {}
        self.fail_times: dict[int, float] = {}
        self.recorder = TrajectoryRecorder()
        self.agents: dict[int, Agent] = {}
        for spec in sorted(cfg.drones, key=lambda d: d.address):
            self.agents[spec.address] = Agent(spec.address, spec, cfg, self)
        if cfg.bridge is not None:
            self.agents[cfg.bridge] = Agent(cfg.bridge, None, cfg, self)
            self.net.send(cfg.bridge, m.encode_control(m.Command.TAKEOFF))
        else:
            for a in self.flyer_addresses:
                self.agents[a].flying = True
        self._probed = False

    def _on_message(self, addr: int, src: int, msg: Message) -> None:
        self.agents[addr].on_message(src, msg)

    def _on_report(self, addr: int, report: DeliveryReport) -> None:
        self.agents[addr].on_report(report)

    def current_main(self) -> Agent | None:
        for a in self.flyer_addresses:
            ag = self.agents[a]
            if ag.is_main:
                return ag
        return None

    def _apply_failures(self) -> None:
        for f in self.cfg.failures:
            ag = self.agents.get(f.address)
            if ag is None or ag.failed:
                continue
            if (f.time is not None and self.time >= f.time) or \
                    (f.after_poses is not None and ag.next_index >= f.after_poses and ag.scanner is None):
                log.info("drone %d fails at t=%.2f", f.address, self.time)
                ag.fail()

    def _flying_done(self) -> bool:
        return all(self.agents[a].landed or self.agents[a].failed for a in self.flyer_addresses)

    def run(self) -> MissionResult:
        dt = TICK_DT
        completed = False
        while True:
            self.time = self.ticks * dt
            self.net.run_until(self.time)
            self._apply_failures()
            for a in sorted(self.agents):
                self.agents[a].tick(dt)
            for a in self.flyer_addresses:
                ag = self.agents[a]
                if not ag.failed:
                    self.recorder.record(self.time, a, ag.state)
            self.ticks += 1
            if self._flying_done() and self.net.idle():
                main = self.current_main()
                if main is not None:
                    for t in main.tasks:
                        log.warning("main %d: match task %s-%s never completed", main.address, t.a, t.b)
                    main.tasks = []
                    completed = True
                    break
                if main is None and not self._probed:
                    # nobody has noticed the failed main yet: every survivor probes
                    self._probed = True
                    for a in self.flyer_addresses:
                        if not self.agents[a].failed:
                            self.net.send(a, m.encode_control(m.Command.LAND))
                elif main is None:
                    break
            if self.time > self.cfg.max_time:
                log.warning("mission stopped at max_time %.1f s", self.cfg.max_time)
                break
        duration = self.time
        main = self.current_main()
        if main is not None:
            main.run_slam(final=True)
            self.net.run_until_idle()
            pre, post, report = main.graph_pre, main.graph_post, main.report
        else:
            pre = post = PoseGraph()
            report = None
        truth, scans = {}, {}
        for a in self.flyer_addresses:
            truth.update(self.agents[a].true_at_pose)
            scans.update(self.agents[a].scans)
        tables = {a: dict(ag.table) for a, ag in self.agents.items() if not ag.failed}
        rejected = sum(ag.rejected for ag in self.agents.values())
        return MissionResult(self.cfg, pre, post, report, truth, scans, self.recorder, self.net,
                             tables, main.address if main else -1, duration, dict(self.land_times),
                             list(self.closure_log), rejected, completed)


def run_mission(cfg: MissionConfig) -> MissionResult:
    return Engine(cfg).run()


def table_bytes(table: dict[PoseId, Pose2D]) -> bytes:
    """Canonical byte form of a pose table, ordered by pose id."""
    return b"".join(m.encode_pum(pid, table[pid]).body for pid in sorted(table))


def write_outputs(result: MissionResult, out_dir) -> dict[str, Path]:
    """Write trajectories, packet log, graphs, scans, maps and a summary."""
    from . import export, grid, metrics

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    files = {}
    files["trajectories"] = export._write(out / "trajectories.csv", result.trajectories.to_csv())
    files["packets"] = export._write(out / "packets.csv", result.network.packet_log_csv())
    files["graph_pre"] = export.write_json(out / "graph_pre.json", result.graph_dict(result.graph_pre))
    files["graph_post"] = export.write_json(out / "graph_post.json", result.graph_dict(result.graph_post))
    files["scans"] = export._write(out / "scans.csv", export.scan_dump_csv(result.scans))
    pre, _ = result.map_points()
    post, origins = result.map_points(result.graph_post)
    files["map_pre"] = export._write(out / "map_pre.csv", export.cloud_csv(pre))
    files["map_post"] = export._write(out / "map_post.csv", export.cloud_csv(post))
    occ = grid.to_occupancy_grid(post, origins)
    grid.save_pgm(occ, out / "map_post.pgm")
    files["pgm"] = out / "map_post.pgm"
    traj = {a: v[:, 5:7] for a, v in result.trajectories.per_drone().items()}
    files["svg"] = export._write(out / "map_post.svg", export.svg(result.config.world.walls, traj, post))
    files["summary"] = export.write_json(out / "summary.json", summary(result))
    return files


def summary(result: MissionResult) -> dict:
    from . import metrics

    s = {"completed": result.completed, "main": result.main, "duration_s": result.duration,
         "flight_time_s": result.flight_time, "poses": len(result.graph_post.nodes),
         "virtual_edges": result.graph_post.n_virtual, "rejected_matches": result.rejected,
         "on_air_bytes": result.network.on_air_bytes, "model_bytes": result.network.model_bytes}
    est_pre, gt = result.pose_arrays(result.graph_pre)
    est_post, _ = result.pose_arrays(result.graph_post)
    if len(gt):
        s["rmse_poses_pre"] = metrics.rmse_poses(est_pre, gt)
        s["rmse_poses_post"] = metrics.rmse_poses(est_post, gt)
    pre, _ = result.map_points()
    post, _ = result.map_points(result.graph_post)
    if len(pre):
        s["rmse_map_pre"] = metrics.rmse_map(pre, result.config.world.walls)
        s["rmse_map_post"] = metrics.rmse_map(post, result.config.world.walls)
    return s
