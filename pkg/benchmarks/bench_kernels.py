"""Time the numba and numpy kernel backends on the same workloads.

    python benchmarks/bench_kernels.py [--repeat 3]

Both backends live in one process; the numba one is skipped when numba is
disabled (PILOTWAVE_NUMBA=0).  First numba calls are reported separately since
they include compilation (cached on disk after the first run).
"""
import argparse
import math
import time

import numpy as np

from pilotwave import _backend
from pilotwave.reference_states import three_term_state, two_particle_state
from pilotwave.kernels import IntegratorOptions, get_backend


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads():
    s1, s2 = three_term_state(), two_particle_state()
    y1 = np.linspace(-8, 8, 20001)[:, None]
    g = np.linspace(-3, 3, 101)
    y2 = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    starts = np.linspace(-3.9, 3.9, 200)[:, None]
    opts = IntegratorOptions()
    return [
        ("eval 1D x20001", lambda b: b.eval_points(y1, 0.3, s1.packed)),
        ("velocity 1D x20001", lambda b: b.velocities(y1, 0.3, s1.packed)),
        ("velocity 2D x10201", lambda b: b.velocities(y2, 0.3, s2.packed)),
        ("trajectories 1D x200, t=pi", lambda b: b.integrate_batch(starts, 0.0, math.pi, s1.packed, opts)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = ["numba", "numpy"] if _backend.USE_NUMBA else ["numpy"]
    print(f"{'workload':32s}" + "".join(f"{n:>14s}" for n in names) + "    speedup")
    for label, work in workloads():
        row = {}
        for n in names:
            b = get_backend(n)
            if n == "numba":
                t0 = time.perf_counter()
                work(b)
                first = time.perf_counter() - t0
                print(f"  (numba first call incl. compile/cache load: {first:.3f} s)")
            row[n] = best_of(lambda: work(b), args.repeat)
        line = f"{label:32s}" + "".join(f"{row[n]:13.4f}s" for n in names)
        if len(names) == 2:
            line += f"   x{row['numpy'] / row['numba']:.1f}"
        print(line)


if __name__ == "__main__":
    main()
