"""Time the compiled RK4 kernel against the pure-Python loop.

    python benchmarks/bench_kernels.py [--t-end 2000] [--repeat 3]

Both backends integrate the same ic1 trajectory; the script checks that
the recorded states agree bit for bit and prints the best wall time of
each backend.
"""

import argparse
import sys
import time

import numpy as np

from hbvcapsid import _backend
from hbvcapsid.integrator import SimConfig, simulate
from hbvcapsid.params import BASELINE, IC1


def best_time(backend, config, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        traj = simulate(BASELINE, IC1, config, backend=backend)
        times.append(time.perf_counter() - start)
    return min(times), traj


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--t-end", type=float, default=2000.0, help="horizon in days (step 0.01)")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    config = SimConfig(t_end=args.t_end, step=0.01, output_every=100)
    if "compiled" not in _backend.BACKENDS:
        print("compiled backend not built; reinstall with Cython available", file=sys.stderr)
        return 1

    py_time, py_traj = best_time("python", config, args.repeat)
    c_time, c_traj = best_time("compiled", config, args.repeat)
    identical = np.array_equal(py_traj.states, c_traj.states)

    print(f"steps:     {config.n_steps}")
    print(f"python:    {py_time:.3f} s  ({config.n_steps / py_time:,.0f} steps/s)")
    print(f"compiled:  {c_time:.4f} s  ({config.n_steps / c_time:,.0f} steps/s)")
    print(f"speed-up:  {py_time / c_time:.1f}x")
    print(f"bitwise identical: {identical}")
    return 0 if identical else 1


if __name__ == "__main__":
    sys.exit(main())
