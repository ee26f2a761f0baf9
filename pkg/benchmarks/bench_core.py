"""Compare the compiled core with the numpy fallback on the hot kernels.

Run ``python3 benchmarks/bench_core.py``. Both backends are imported
directly, so no environment setup is needed. Reports the best of several
repeats and the largest relative disagreement between the two.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from relaylattice import _core_py

try:
    from relaylattice import _core
except ImportError:  # extension not built
    _core = None


def _cases(n_switched: int):
    rng = np.random.default_rng(0)
    a = 1.3349427634387698
    ks = np.arange(n_switched, dtype=np.int64)
    tks = a * ks.astype(float) ** 2 + rng.uniform(-1, 1, n_switched) * np.sqrt(ks + 1.0)
    t = a * (n_switched + 1) ** 2
    ns = np.arange(n_switched - 3, n_switched + 5, dtype=np.int64)
    return {
        "green_values small tau": (lambda m: m.green_values(np.arange(0, 66), 5.0)),
        "green_values large tau": (lambda m: m.green_values(np.arange(0, 66), 1e4)),
        f"green_sums K={n_switched}": (lambda m: m.green_sums(ns, t, ks, tks)),
        "ive_range n=200 x=400": (lambda m: m.ive_range(200, 400.0)),
    }


def _rel_diff(x, y) -> float:
    """Largest max-norm relative difference over the output arrays."""
    xs = x if isinstance(x, tuple) else (x,)
    ys = y if isinstance(y, tuple) else (y,)
    worst = 0.0
    for u, v in zip(xs, ys):
        u, v = np.asarray(u, float), np.asarray(v, float)
        worst = max(worst, float(np.max(np.abs(u - v)) / max(np.max(np.abs(v)), 1e-300)))
    return worst


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--switched", type=int, default=1000, help="switched nodes in green_sums")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled core not available; build with pip install -e . --no-build-isolation")
        return 1
    print(f"{'kernel':28s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, fn in _cases(args.switched).items():
        tp = min(timeit.repeat(lambda: fn(_core_py), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat))
        diff = _rel_diff(fn(_core), fn(_core_py))
        print(f"{name:28s} {1e3 * tp:12.3f} {1e3 * tc:12.3f} {tp / tc:8.1f} {diff:13.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
