"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeats 20]

Prints a CSV of median wall time per call and the speed-up.
"""
import argparse
import statistics
import time

import numpy as np

from swarmslam import kernels
from swarmslam.geometry import Pose2D, Transform2D
from swarmslam.icp import icp
from swarmslam.scenarios import room_world, static_scan


def timed(fn, repeats):
    fn()
    out = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return statistics.median(out)


def cases(rng):
    w = room_world()
    scan = static_scan(w, Pose2D(2.5, 1.5, 0.3))
    moved = Transform2D(0.1, 0.05, -0.03).apply(scan)
    origins = rng.uniform(0.5, 2.5, (480, 2))
    angles = rng.uniform(-np.pi, np.pi, 480)
    for n in (120, 480):
        p = rng.uniform(0, 3, (n, 2))
        yield f"nearest_neighbors n={n}", lambda b, p=p: kernels.nearest_neighbors(p, p[::-1], backend=b)
    yield "ray_cast_batch 480 rays", lambda b: kernels.ray_cast_batch(origins, angles, 4.0, w.walls, backend=b)
    yield f"icp {len(scan)} points", lambda b: icp(scan, moved, backend=b)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print("case," + ",".join(f"{b}_ms" for b in backends) + (",speedup" if len(backends) == 2 else ""))
    for name, fn in cases(np.random.default_rng(0)):
        ms = [1e3 * timed(lambda: fn(b), args.repeats) for b in backends]
        row = [name] + [f"{m:.3f}" for m in ms]
        if len(ms) == 2:
            row.append(f"{ms[1] / ms[0]:.2f}")
        print(",".join(row))


if __name__ == "__main__":
    main()
