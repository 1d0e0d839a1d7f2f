"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--pipeline]

Kernel timings run in-process with both backends loaded side by side.
``--pipeline`` also times the full odometry loop on a short simulated
sequence in two subprocesses, one per value of ``LIO_NUMBA``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from lio import kernels
from lio.local_map import VoxelMap
from lio.sim import default_world

PIPELINE = """
import time
from lio import kernels
from lio.odometry import Odometry
from lio.sim import SimSpec, simulate_dataset
ds = simulate_dataset(SimSpec(profile="figure8", duration={duration}))
odo = Odometry(extrinsics=ds.extrinsics)
odo.add_imu(ds.imu)
t0 = time.perf_counter()
for cloud, start, end in ds.scans:
    odo.process_scan(cloud, end, t_start=start)
print(kernels.BACKEND, 1e3 * (time.perf_counter() - t0) / len(ds.scans))
"""


def _cases(rng):
    m = VoxelMap(1.0, 20)
    m.insert(rng.uniform(-30, 30, (200_000, 3)) * [1, 1, 0.2])
    queries = rng.uniform(-30, 30, (5_000, 3)) * [1, 1, 0.2]
    src = rng.normal(size=(5_000, 3)) * 10
    res = rng.normal(size=(5_000, 3)) * 0.1
    R = np.eye(3)
    slots = rng.integers(0, 20_000, 30_000)
    pts = rng.normal(size=(30_000, 3))
    w = default_world()
    origins = np.zeros((28_800, 3)) + [1.0, 2.0, 0.0]
    dirs = rng.normal(size=(28_800, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def fill(k):
        return k.fill_voxels(slots, pts, np.zeros((20_000, 20, 3)),
                             np.zeros(20_000, dtype=np.int64), 20)

    return {
        "nn_search (5k queries, 200k pts)": lambda k: k.nn_search(
            queries, m._sorted_keys, m._sorted_slots, m._slot_points, m._counts, 1.0, 0.5),
        "icp_normal_equations (5k)": lambda k: k.icp_normal_equations(src, res, R),
        "fill_voxels (30k)": fill,
        "raycast (28.8k rays)": lambda k: k.raycast(origins, dirs, w.room_lo, w.room_hi,
                                                    w.boxes_lo, w.boxes_hi, w.planes),
    }


def bench_kernels(repeat):
    backends = {"numpy": kernels.load_backend("numpy")}
    try:
        backends["numba"] = kernels.load_backend("numba")
    except ImportError:
        print("numba not installed; timing numpy only")
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':36s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speedup':>10s}")
    for name, fn in cases.items():
        times = {}
        for b, mod in backends.items():
            fn(mod)  # warm up, triggers compilation
            times[b] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=repeat)) * 1e3
        row = f"{name:36s}" + "".join(f"{times[b]:10.2f}ms" for b in backends)
        if "numba" in times:
            row += f"{times['numpy'] / times['numba']:9.1f}x"
        print(row)


def bench_pipeline(duration):
    print(f"\nfull pipeline, {duration:g} s figure eight")
    for flag in ("1", "0"):
        env = dict(os.environ, LIO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", PIPELINE.format(duration=duration)],
                             env=env, capture_output=True, text=True, check=True)
        backend, ms = out.stdout.split()
        print(f"  {backend:6s} {float(ms):8.1f} ms per scan")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--pipeline", action="store_true")
    ap.add_argument("--duration", type=float, default=5.0)
    args = ap.parse_args()
    bench_kernels(args.repeat)
    if args.pipeline:
        bench_pipeline(args.duration)


if __name__ == "__main__":
    main()
