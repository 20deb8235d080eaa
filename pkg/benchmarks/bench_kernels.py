"""Compare the compiled anisotropy-search kernel against the numpy fallback.

The backend is chosen at import time from DPGADAPT_NO_NUMBA, so this script
re-executes itself once with the flag set and reports both timings:

    python3 benchmarks/bench_kernels.py [--ne 20000] [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def make_inputs(ne, seed=42):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.1, 10.0, size=(ne, 2))
    rho = rng.uniform(1.0, 1e4, size=(ne, 2))
    phi_i = rng.uniform(0.0, np.pi, size=(ne, 2))
    order = np.array([2, 4])
    lam = rng.uniform(1e-4, 1.0, size=ne)
    return A, rho, phi_i, order, lam


def run_backend(ne, repeat):
    from dpgadapt import _kernels

    args = make_inputs(ne)
    _kernels.anisotropy_search(*args)  # warm-up / JIT compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        beta, phi, gbar = _kernels.anisotropy_search(*args)
        best = min(best, time.perf_counter() - t0)
    return _kernels.BACKEND, best, float(np.sum(gbar))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ne", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--single", action="store_true",
                    help="benchmark only the currently selected backend")
    opts = ap.parse_args()

    backend, dt, checksum = run_backend(opts.ne, opts.repeat)
    print(f"{backend:>6}: {dt * 1e3:9.2f} ms  "
          f"({opts.ne} elements, best of {opts.repeat}, sum Gbar {checksum:.6e})")
    if opts.single or backend == "numpy":
        return
    env = dict(os.environ, DPGADAPT_NO_NUMBA="1")
    subprocess.run([sys.executable, __file__, "--ne", str(opts.ne),
                    "--repeat", str(opts.repeat), "--single"], env=env,
                   check=True)


if __name__ == "__main__":
    main()
