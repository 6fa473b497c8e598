"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_backends.py [--dim 1000] [--steps 2000] [--grid 4096]

Both backends consume the same random stream, so the script also reports the
largest relative difference between their outputs.
"""
import argparse
import time

import numpy as np

from batchsched import _kernels_py
from batchsched.fsl import DIVERGENCE_FACTOR, kernel_spectral, signal_spectral
from batchsched.model import ProblemSpec, make_spectrum

try:
    from batchsched import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=1000)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=2)
    ap.add_argument("--grid", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    spec = ProblemSpec(0.5, 2.0, sigma=1.0, eta=0.05, dim=args.dim)
    sp = make_spectrum(spec)
    sl = np.sqrt(np.asarray(sp.lambdas))
    ts = np.ascontiguousarray(sp.theta_star)
    bs = np.full(args.steps, args.batch, dtype=np.int64)
    theta0 = np.zeros(args.dim)

    T = args.steps * spec.eta
    h = T / args.grid
    grid = np.arange(args.grid + 1) * h
    Kg = np.ascontiguousarray(kernel_spectral(grid, sp))
    eg = np.ascontiguousarray(signal_spectral(grid, sp))
    w = np.full(args.grid + 1, spec.eta / args.batch)

    backends = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels else [])
    results = {}
    print(f"dim={args.dim} steps={args.steps} batch={args.batch} grid={args.grid}")
    for name, mod in backends:
        t_sgd, sgd = best_of(lambda: mod.sgd_run(sl, ts, bs, spec.eta, spec.sigma, 100, theta0,
                                                 np.random.default_rng(0)), args.repeat)
        t_vol, vol = best_of(lambda: mod.volterra_march(Kg, eg, w, h, 0.5 * spec.sigma ** 2,
                                                        DIVERGENCE_FACTOR), args.repeat)
        results[name] = (sgd[1], vol[0])
        per = t_sgd / (args.steps * args.batch * args.dim) * 1e9
        print(f"{name:>7}: sgd_run {t_sgd:8.4f} s ({per:6.1f} ns/sample-coord)   "
              f"volterra_march {t_vol:8.4f} s")
    if len(results) == 2:
        (a_sgd, a_vol), (b_sgd, b_vol) = results["python"], results["cython"]
        print(f"max rel diff: sgd {np.max(np.abs(a_sgd / b_sgd - 1)):.2e}, "
              f"volterra {np.max(np.abs(a_vol / b_vol - 1)):.2e}")
    else:
        print("compiled backend not available")


if __name__ == "__main__":
    main()
