#!/usr/bin/env python3
"""Benchmark the what-if replay kernel: numba backend versus numpy fallback.

The replay drain runs twice per merge assessment, so it dominates admission
cost on busy queues. Usage:

    python3 benchmarks/bench_replay.py [--units 2000] [--machines 8] [--reps 30]
"""

import argparse
import time

import numpy as np

from mergesim import Policy
from mergesim._drain import get_drain
from mergesim.admission import MachineSnap, SystemSnapshot, UnitSnap, snapshot_arrays


def build_snapshot(n_units, n_machines, capacity, seed):
    rng = np.random.default_rng(seed)
    uid = 0
    machines = []
    for m in range(n_machines):
        executing = UnitSnap(uid, 0.0, float(rng.uniform(2, 12)), float(rng.uniform(0, 1)),
                             float(rng.uniform(50, 400)), ((uid, float(rng.uniform(50, 400))),))
        uid += 1
        local = []
        for _ in range(capacity):
            local.append(UnitSnap(uid, 0.0, float(rng.uniform(2, 12)), float(rng.uniform(0, 1)),
                                  float(rng.uniform(50, 400)), ((uid, float(rng.uniform(50, 400))),)))
            uid += 1
        machines.append(MachineSnap(m, executing, float(rng.uniform(0, 10)), tuple(local)))
    batch = []
    while uid < n_units:
        batch.append(UnitSnap(uid, float(rng.uniform(0, 100)), float(rng.uniform(2, 12)),
                              float(rng.uniform(0, 1)), float(rng.uniform(50, 400)),
                              ((uid, float(rng.uniform(50, 400))),)))
        uid += 1
    return SystemSnapshot(now=100.0, queue_capacity=capacity,
                          machines=tuple(machines), batch=tuple(batch))


def bench(drain, snapshot, reps):
    units, exec_unit, exec_end, local_units, local_ptr, order, dur = snapshot_arrays(
        snapshot, Policy.EDF
    )
    comp = np.empty(len(units), np.float64)
    mach = np.full(len(units), -1, np.int64)
    args = (100.0, int(snapshot.queue_capacity), exec_unit, exec_end,
            local_units, local_ptr, order, dur, comp, mach)
    drain(*args)  # warm-up (numba compiles here)
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        drain(*args)
        best = min(best, time.perf_counter() - t0)
    return best, comp.copy(), mach.copy()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--units", type=int, default=2000)
    parser.add_argument("--machines", type=int, default=8)
    parser.add_argument("--capacity", type=int, default=1)
    parser.add_argument("--reps", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    snapshot = build_snapshot(args.units, args.machines, args.capacity, args.seed)
    results = {}
    for backend in ("numpy", "numba"):
        best, comp, mach = bench(get_drain(backend), snapshot, args.reps)
        results[backend] = (best, comp, mach)
        print(f"{backend:>6}: best of {args.reps} -> {best * 1e6:9.1f} us "
              f"({args.units} units, {args.machines} machines)")
    np.testing.assert_array_equal(results["numpy"][1], results["numba"][1])
    np.testing.assert_array_equal(results["numpy"][2], results["numba"][2])
    speedup = results["numpy"][0] / results["numba"][0]
    print(f"outputs identical; numba speedup: {speedup:.1f}x")


if __name__ == "__main__":
    main()
