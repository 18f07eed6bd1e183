"""Command line entry point: ``swarmslam <subcommand>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np


def _ints(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def cmd_simulate(args) -> int:
    from .mission import load_mission, run_mission, summary, write_outputs

    cfg = load_mission(args.mission)
    if args.seed is not None:
        cfg.seed = args.seed
    result = run_mission(cfg)
    write_outputs(result, args.out)
    print(json.dumps(summary(result), indent=1))
    return 0


def cmd_icp_bench(args) -> int:
    from .icp import icp_runtime_profile

    prof = icp_runtime_profile(args.sizes, args.repeats, args.seed, backend=args.backend)
    sys.stdout.write(prof.to_csv())
    print(prof.summary())
    return 0


def cmd_slam_bench(args) -> int:
    from .bench import slam_bench, slam_bench_csv

    sys.stdout.write(slam_bench_csv(slam_bench(args.poses, args.constraints, args.repeats, args.seed)))
    return 0


def _load_graph(path):
    from .posegraph import PoseGraph

    return json.loads(Path(path).read_text()), PoseGraph.from_json(Path(path).read_text())


def _scan_cloud(scans_path, graph):
    from .export import load_scan_dump
    from .posegraph import PoseId

    dump = load_scan_dump(Path(scans_path).read_text())
    pts, origins = [], []
    for packed, local in sorted(dump.items()):
        pid = PoseId.unpack(packed)
        if pid not in graph.nodes:
            continue
        pose = graph.nodes[pid]
        pts.append(pose.as_transform().apply(local))
        origins.append(np.repeat(pose.xy[None, :], len(local), axis=0))
    if not pts:
        return np.empty((0, 2)), np.empty((0, 2))
    return np.concatenate(pts), np.concatenate(origins)


def cmd_eval(args) -> int:
    from .metrics import rmse_map, rmse_poses
    from .world import load_world

    raw, graph = _load_graph(args.graph)
    world = load_world(Path(args.world))
    out = {"poses": len(graph.nodes), "virtual_edges": graph.n_virtual}
    truth = [(n["true_x"], n["true_y"]) for n in raw["nodes"] if "true_x" in n]
    if truth and len(truth) == len(raw["nodes"]):
        est = [(n["x"], n["y"]) for n in raw["nodes"]]
        out["rmse_poses"] = rmse_poses(est, truth)
    if args.scans:
        pts, _ = _scan_cloud(args.scans, graph)
        out["rmse_map"] = rmse_map(pts, world.walls)
        out["map_points"] = int(len(pts))
    print(json.dumps(out, indent=1))
    return 0


def cmd_export(args) -> int:
    from . import export, grid
    from .world import load_world

    _, graph = _load_graph(args.graph)
    pts, origins = _scan_cloud(args.scans, graph) if args.scans else (np.empty((0, 2)), np.empty((0, 2)))
    if args.format == "pgm":
        grid.save_pgm(grid.to_occupancy_grid(pts, origins, args.resolution, args.min_hits), args.out)
    elif args.format == "csv":
        export._write(args.out, export.cloud_csv(pts))
    else:
        walls = load_world(Path(args.world)).walls if args.world else None
        traj = {}
        for p in sorted(graph.nodes):
            traj.setdefault(p.drone, []).append((graph.nodes[p].x, graph.nodes[p].y))
        export._write(args.out, export.svg(walls, {k: np.array(v) for k, v in traj.items()}, pts))
    print(json.dumps({"written": str(args.out), "format": args.format}))
    return 0


def cmd_bandwidth(args) -> int:
    from .net import DEFAULT_BITRATE, required_bandwidth

    b = required_bandwidth(args.n, args.d, args.p_sm, args.velocity)
    ok = b["bits_per_s"] <= args.capacity
    print(f"assumption: p_sm={args.p_sm} pose_spacing={args.d} m velocity={args.velocity} m/s "
          f"(pose rate {args.velocity / args.d:.3f} Hz per drone)")
    print(f"required {b['bits_per_s']:.1f} bit/s for N={args.n} "
          f"{'<=' if ok else '>'} capacity {args.capacity:.1f} bit/s: {'OK' if ok else 'EXCEEDED'}")
    return 0 if ok or not args.check else 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmslam", description="Nano-drone swarm mapping simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a mission and write its outputs")
    s.add_argument("--mission", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("icp-bench", help="ICP runtime against scan size")
    s.add_argument("--sizes", type=_ints, default=list(range(32, 481, 32)))
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--backend", choices=["compiled", "python"], default=None)
    s.set_defaults(func=cmd_icp_bench)

    s = sub.add_parser("slam-bench", help="pose-graph optimisation runtime")
    s.add_argument("--poses", type=_ints, default=[50, 100, 176])
    s.add_argument("--constraints", type=_ints, default=[32])
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_slam_bench)

    s = sub.add_parser("eval", help="pose and map RMSE of a graph")
    s.add_argument("--graph", required=True)
    s.add_argument("--world", required=True)
    s.add_argument("--scans")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export", help="export a map as PGM, CSV or SVG")
    s.add_argument("--graph", required=True)
    s.add_argument("--scans")
    s.add_argument("--world")
    s.add_argument("--format", choices=["pgm", "csv", "svg"], required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--resolution", type=float, default=0.1)
    s.add_argument("--min-hits", type=int, default=3)
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("bandwidth", help="swarm bandwidth model against the channel capacity")
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--d", type=float, default=1.0)
    s.add_argument("--p-sm", type=float, default=0.0)
    s.add_argument("--velocity", type=float, default=0.4)
    s.add_argument("--capacity", type=float, default=64100.0)
    s.add_argument("--check", action="store_true", help="exit 3 when the capacity is exceeded")
    s.set_defaults(func=cmd_bandwidth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
