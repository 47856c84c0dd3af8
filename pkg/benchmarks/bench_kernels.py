"""Compare the compiled log-determinant kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py            # kernel micro-benchmarks
    python benchmarks/bench_kernels.py --end-to-end

``--end-to-end`` also times the exhaustive heat benchmark (28 candidate
sensors, k=5) under each backend in a fresh interpreter, selecting the
backend through ``STRUCTOED_PURE_PYTHON``.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from structoed import _kernels_py

try:
    from structoed import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

END_TO_END = """
import time
from structoed.bench import exhaustive_search
from structoed.kernels import BACKEND
from structoed.problems import HeatConfig, heat_problem
p = heat_problem(HeatConfig(), seed=1)
a = p.matrix()
t0 = time.perf_counter()
best, dist = exhaustive_search(a, p.mode_sizes, (5, 10))
print(BACKEND, len(dist), time.perf_counter() - t0, max(dist.values))
"""


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    b = rng.standard_normal((60, 200))
    gram = np.ascontiguousarray(b.T @ b)
    designs = np.ascontiguousarray(np.argsort(rng.random((20000, 200)), axis=1)[:, :12])
    blocks = rng.standard_normal((28, 6, 30))
    blocks = np.ascontiguousarray(np.einsum("mri,msi->mrs", blocks, blocks))
    mats = rng.standard_normal((50000, 5, 5))
    mats = np.ascontiguousarray(np.einsum("tij,tkj->tik", mats, mats) + np.eye(5))
    return {
        "gram_subset_logdet (20000 designs, K=12)": ("gram_subset_logdet", (gram, designs)),
        "block_combo_logdet (C(28,5), r=6)": ("block_combo_logdet", (blocks, 5, np.eye(6))),
        "stack_logdet (50000 of 5x5)": ("stack_logdet", (mats,)),
    }


def run_kernels(repeats):
    rng = np.random.default_rng(0)
    print(f"{'kernel':44s} {'python [s]':>11s} {'compiled [s]':>13s} {'speedup':>8s}")
    for label, (name, args) in cases(rng).items():
        t_py, v_py = best_of(lambda: getattr(_kernels_py, name)(*args), repeats)
        if _kernels_c is None:
            print(f"{label:44s} {t_py:11.4f} {'n/a':>13s}")
            continue
        t_c, v_c = best_of(lambda: getattr(_kernels_c, name)(*args), repeats)
        agree = np.allclose(v_py, v_c, rtol=1e-9, atol=1e-9)
        print(f"{label:44s} {t_py:11.4f} {t_c:13.4f} {t_py / t_c:7.1f}x" + ("" if agree else "  MISMATCH"))


def run_end_to_end():
    print("\nexhaustive heat search, 98280 designs")
    for pure in ("1", "0"):
        env = dict(os.environ, STRUCTOED_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", END_TO_END], env=env,
                             capture_output=True, text=True, check=True)
        backend, count, took, best = res.stdout.split()
        print(f"  {backend:9s} {float(took):8.2f} s   best EIG {float(best):.10f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--end-to-end", action="store_true")
    args = parser.parse_args()
    run_kernels(args.repeats)
    if args.end_to_end:
        run_end_to_end()


if __name__ == "__main__":
    main()
