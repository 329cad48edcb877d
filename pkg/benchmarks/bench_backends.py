"""Timing comparison of the numba and numpy offset-averaging backends.

The cell-pair averages of the built-in homogeneous kernels are the hot loop
of every convolutional assembly; this script times them in-process with the
current backend and in a subprocess pinned to the numpy fallback.

    python benchmarks/bench_backends.py [--n 32] [--order 4] [--repeat 3]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

SCRIPT = """
import time
import numpy as np
from cuspspec._accel import backend_name, offset_averages, KIND_GRAD_ABS, KIND_ABS
from cuspspec.quadrature import QuadratureRule

n = {n}
order = {order}
repeat = {repeat}
rule = QuadratureRule(order=order, singular_oversampling=4)
ax = np.arange(-(n - 1), n)
g = np.meshgrid(ax, ax, ax, indexing="ij")
offsets = np.stack([a.ravel() for a in g], axis=1)
h = np.full(3, 1.0 / n)
# warm-up (includes jit compilation when the numba backend is active)
offset_averages(offsets[:32], h, rule, KIND_GRAD_ABS)
best = {{}}
for name, kind in (("grad_abs", KIND_GRAD_ABS), ("abs", KIND_ABS)):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        offset_averages(offsets, h, rule, kind)
        times.append(time.perf_counter() - t0)
    best[name] = min(times)
print(backend_name(), best["grad_abs"], best["abs"])
"""


def run(env_flag, n, order, repeat):
    env = dict(os.environ, CUSPSPEC_NUMBA=env_flag)
    out = subprocess.run(
        [sys.executable, "-c", SCRIPT.format(n=n, order=order, repeat=repeat)],
        env=env, capture_output=True, text=True, check=True)
    name, t_grad, t_abs = out.stdout.split()
    return name, float(t_grad), float(t_abs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32, help="cells per axis")
    ap.add_argument("--order", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rows = []
    for flag in ("1", "0"):
        try:
            rows.append(run(flag, args.n, args.order, args.repeat))
        except subprocess.CalledProcessError as exc:
            print(f"backend CUSPSPEC_NUMBA={flag} failed:\n{exc.stderr}", file=sys.stderr)

    m = (2 * args.n - 1) ** 3
    print(f"\noffset averages, {m} offsets, order {args.order}, "
          f"best of {args.repeat}:")
    print(f"{'backend':>8} {'grad_abs [s]':>14} {'abs [s]':>12}")
    for name, t_grad, t_abs in rows:
        print(f"{name:>8} {t_grad:>14.4f} {t_abs:>12.4f}")
    if len(rows) == 2:
        print(f"\nspeedup (numpy / numba): "
              f"grad_abs {rows[1][1] / rows[0][1]:.1f}x, "
              f"abs {rows[1][2] / rows[0][2]:.1f}x")


if __name__ == "__main__":
    main()
