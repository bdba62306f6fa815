"""Compare the compiled and numpy ADMM kernels.

Times a fixed block of iterations on QPs of increasing size, then a full
closed-loop experiment with an input box (unconstrained problems take the
direct equality-QP path and never reach the kernel).

    python3 benchmarks/bench_admm.py
"""
import argparse
import time
import warnings

import numpy as np

from ddmpc.experiments import ExperimentConfig, run_experiment
from ddmpc.mpc import PersistenceWarning
from ddmpc.qpsolve import _kernel_py, kernels

try:
    from ddmpc.qpsolve import _kernel
except ImportError:
    _kernel = None


def _problem(nz, mc, seed=0):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((nz, nz))
    P = M @ M.T + np.eye(nz)
    A = np.ascontiguousarray(rng.standard_normal((mc, nz)))
    rho = np.full(mc, 0.1)
    Lc = np.ascontiguousarray(np.linalg.cholesky(P + 1e-6 * np.eye(nz) + A.T @ (rho[:, None] * A)))
    q = rng.standard_normal(nz)
    return Lc, A, q, -np.ones(mc), np.ones(mc), rho


def time_block(fn, prob, n_iter, repeat):
    Lc, A, q, l, u, rho = prob
    best = np.inf
    for _ in range(repeat):
        x, z, y = np.zeros(q.size), np.zeros(A.shape[0]), np.zeros(A.shape[0])
        dx, dy = np.zeros_like(x), np.zeros_like(y)
        t0 = time.perf_counter()
        fn(Lc, A, q, l, u, rho, 1e-6, 1.6, x, z, y, n_iter, dx, dy)
        best = min(best, time.perf_counter() - t0)
    return best


def time_closed_loop(block_fn, T):
    saved = kernels.admm_block
    kernels.admm_block = block_fn
    try:
        t0 = time.perf_counter()
        run_experiment(ExperimentConfig(T=T, u_min=0.0, u_max=1.6), keep_solutions=False)
        return time.perf_counter() - t0
    finally:
        kernels.admm_block = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--T", type=int, default=100, help="closed-loop steps for the end-to-end timing")
    args = ap.parse_args()
    if _kernel is None:
        print("compiled kernel not built; only the numpy fallback is available")
        return
    warnings.simplefilter("ignore", PersistenceWarning)

    print(f"{'nz':>5} {'rows':>5} {'numpy [ms]':>11} {'compiled [ms]':>14} {'speedup':>8}")
    for nz, mc in ((10, 15), (40, 60), (140, 240), (435, 160)):
        prob = _problem(nz, mc)
        t_py = time_block(_kernel_py.admm_block, prob, args.iters, args.repeat)
        t_c = time_block(_kernel.admm_block, prob, args.iters, args.repeat)
        print(f"{nz:>5} {mc:>5} {1e3 * t_py:>11.2f} {1e3 * t_c:>14.2f} {t_py / t_c:>8.1f}")

    t_py = time_closed_loop(_kernel_py.admm_block, args.T)
    t_c = time_closed_loop(_kernel.admm_block, args.T)
    print(f"\nclosed loop, T={args.T}: numpy {t_py:.2f} s, compiled {t_c:.2f} s, "
          f"speedup {t_py / t_c:.1f}x")


if __name__ == "__main__":
    main()
