"""Compare the numba and numpy jet kernels.

Run with ``python3 benchmarks/bench_kernels.py``.  The kernel timings use
both implementations in-process; the end-to-end timing runs a short
closed-loop simulation in a subprocess per backend, selected through
``SDPASS_NUMBA``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np
from numba import njit

from sdpass import _kernels
from sdpass.jet import get_basis

E2E = (
    "import time; from sdpass.sim import *; from sdpass import SampledController;"
    "_,_,d=pendulum_design(); c=ExperimentConfig(delta=0.5, kappa=0.1, order=2);"
    "simulate_sampled(c, SampledController(d, 0.5, 2, 0.1), record_residual=False);"
    "t=time.perf_counter();"
    "simulate_sampled(c, SampledController(d, 0.5, 2, 0.1), record_residual=False);"
    "print(time.perf_counter()-t)"
)


def kernel_args(basis, batch, rng):
    o = basis.order
    a = rng.standard_normal((basis.size, batch))
    b = rng.standard_normal((basis.size, batch))
    return a, b, (basis.ia, basis.ib, basis.ic, basis.starts, basis.npairs[o], basis.nout[o])


def bench_mul(nvar, order, batch, repeat):
    rng = np.random.default_rng(0)
    basis = get_basis(nvar, order)
    a, b, tab = kernel_args(basis, batch, rng)
    compiled = _kernels.mul_numba or njit(_kernels._mul_loop)
    ref = _kernels.mul_numpy(a, b, *tab)
    assert np.allclose(compiled(a, b, *tab), ref, rtol=1e-13, atol=1e-13)
    t_np = min(timeit.repeat(lambda: _kernels.mul_numpy(a, b, *tab), number=repeat, repeat=3))
    t_nb = min(timeit.repeat(lambda: compiled(a, b, *tab), number=repeat, repeat=3))
    return t_np / repeat, t_nb / repeat


def end_to_end(flag):
    env = dict(os.environ, SDPASS_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True,
                         text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args()
    print(f"{'nvar':>4} {'order':>5} {'batch':>6} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    for nvar, order in ((2, 4), (3, 4), (3, 6)):
        for batch in (1, 64, 1024):
            t_np, t_nb = bench_mul(nvar, order, batch, max(1, args.repeat // batch))
            print(f"{nvar:>4} {order:>5} {batch:>6} {t_np * 1e6:>10.2f} {t_nb * 1e6:>10.2f} "
                  f"{t_np / t_nb:>8.2f}")
    if not args.skip_e2e:
        t_nb, t_np = end_to_end("1"), end_to_end("0")
        print(f"closed loop delta=0.5 p=2 T=20: numba {t_nb:.2f} s, numpy {t_np:.2f} s")


if __name__ == "__main__":
    main()
