"""Compare the numba and numpy path kernels on the default scenario.

Usage: python3 benchmarks/bench_kernels.py [--paths N] [--horizon T] [--repeat R]
Both backends run the same seeds; the script also checks that they agree.
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from release_ladder import _kernels as K
from release_ladder.config import default_scenario, derive_seed
from release_ladder.ladder import solve_ladder
from release_ladder.simulate import make_plan, run_plan


def time_backend(plan, seeds, backend, repeat):
    best = np.inf
    stats = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        stats = np.array([run_plan(plan, s, backend=backend).stats.discounted_payoff for s in seeds])
        best = min(best, time.perf_counter() - t0)
    return best, stats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=50)
    ap.add_argument("--horizon", type=float, default=10.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = default_scenario()
    cfg = replace(cfg, sim=replace(cfg.sim, horizon=args.horizon))
    ladder = solve_ladder(cfg.params)
    plan = make_plan(cfg, ladder)
    seeds = [derive_seed(cfg.sim.base_seed, i) for i in range(args.paths)]

    if not K.HAVE_NUMBA:
        print("numba is not installed; only the numpy kernel is timed")
    run_plan(plan, seeds[0], backend="numba" if K.HAVE_NUMBA else "numpy")  # compile outside the timing

    t_np, s_np = time_backend(plan, seeds, "numpy", args.repeat)
    print(f"numpy : {t_np:8.3f} s for {args.paths} paths ({1e3 * t_np / args.paths:.2f} ms/path)")
    if K.HAVE_NUMBA:
        t_nb, s_nb = time_backend(plan, seeds, "numba", args.repeat)
        print(f"numba : {t_nb:8.3f} s for {args.paths} paths ({1e3 * t_nb / args.paths:.2f} ms/path)")
        print(f"speedup: {t_np / t_nb:.1f}x")
        print(f"max |payoff difference| between backends: {np.max(np.abs(s_np - s_nb)):.3g}")


if __name__ == "__main__":
    main()
