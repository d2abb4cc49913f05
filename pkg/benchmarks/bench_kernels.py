"""Compare the compiled simulation kernel with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py --paths 20000 --repeat 3

Both backends simulate the same batch and are checked for agreement before
timings are reported.
"""
import argparse
import sys
import time

import numpy as np

from regime_mdp import kernels
from regime_mdp.model import build_builtin
from regime_mdp.simulate import simulate_batch, solve_averaged

CASES = [
    ("two-state-constant", {"sigma": 0.0}, 0.02),
    ("two-state-tanh", {}, 0.02),
    ("three-state-tanh", {}, 0.02),
    ("linear-2d", {}, 0.02),
]


def best_time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=20_000)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)
    if kernels.compiled is None:
        print("compiled kernel not built; nothing to compare", file=sys.stderr)
        return 1

    print(f"{'model':<20} {'steps':>6} {'python s':>9} {'compiled s':>10} {'speedup':>8} "
          f"{'ns/step':>8} {'max|dx|':>9}")
    for name, params, eps in CASES:
        m = build_builtin(name, params)
        x0 = np.zeros(m.d)
        dt = min(1e-3, eps / 10)
        ref = solve_averaged(m, x0, args.T, dt).x

        def run(backend):
            return simulate_batch(m, eps, x0, 1, args.T, dt, 1, args.paths, reference=ref,
                                  workers=args.workers, backend=backend)

        t_py, r_py = best_time(lambda: run("python"), args.repeat)
        t_c, r_c = best_time(lambda: run("compiled"), args.repeat)
        if not np.array_equal(r_py.y_T, r_c.y_T):
            print(f"{name}: terminal regimes differ between backends", file=sys.stderr)
            return 2
        steps = int(round(args.T / dt))
        per_step = t_c / (steps * args.paths) * 1e9
        print(f"{name:<20} {steps:>6} {t_py:>9.3f} {t_c:>10.3f} {t_py / t_c:>8.1f} {per_step:>8.1f} "
              f"{np.abs(r_py.x_T - r_c.x_T).max():>9.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
