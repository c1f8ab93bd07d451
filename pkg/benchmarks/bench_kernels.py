#!/usr/bin/env python3
"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--models 2000] [--p 12] [--repeat 3]

Both backends are imported directly, so the environment switch is not
needed. The script also checks that the two agree before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from pepselect import _pykernels

try:
    from pepselect import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def f1_args(m: int, rng: np.random.Generator):
    # evidence-shaped parameters: n in [20, 100], k1 in [2, 9], delta = n
    n = rng.integers(20, 101, m).astype(float)
    k1 = rng.integers(2, 10, m).astype(float)
    r10 = rng.uniform(0.05, 1.0, m)
    a = b = (n - k1) / 2
    ke = k1 - 1
    A = (n - k1) / 2
    B = (n - 1) / 2
    delta = n
    x = 1 / (1 + delta * r10)
    y = 1 / (1 + delta)
    return (np.ascontiguousarray(b), np.ascontiguousarray(B), np.ascontiguousarray(-A),
            np.ascontiguousarray(ke / 2 + a + b), x, y,
            delta * r10 / (1 + delta * r10), delta / (1 + delta))


def gram(p: int, rng: np.random.Generator):
    X = rng.standard_normal((4 * p, p))
    X -= X.mean(axis=0)
    yv = X[:, 0] - 0.5 * X[:, 1] + rng.standard_normal(4 * p)
    yv -= yv.mean()
    return np.ascontiguousarray(X.T @ X), np.ascontiguousarray(X.T @ yv), float(yv @ yv)


def best_of(fn, repeat: int) -> float:
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", type=int, default=2000, help="F1 evaluations per batch")
    ap.add_argument("--p", type=int, default=12, help="covariates for the subset enumeration")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    fa = f1_args(args.models, rng)
    G, c, rss0 = gram(args.p, rng)

    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not available; timing the fallback only")

    ref_f1 = _pykernels.euler_f1_batch(*fa)[0]
    ref_rss = _pykernels.enumerate_rss(G, c, rss0)[0]
    rows = []
    for name, mod in backends.items():
        f1 = mod.euler_f1_batch(*fa)[0]
        rss = mod.enumerate_rss(G, c, rss0)[0]
        err_f1 = float(np.max(np.abs(f1 - ref_f1)))
        err_rss = float(np.max(np.abs(rss - ref_rss) / rss0))
        t_f1 = best_of(lambda: mod.euler_f1_batch(*fa), args.repeat)
        t_rss = best_of(lambda: mod.enumerate_rss(G, c, rss0), args.repeat)
        rows.append((name, t_f1, t_rss, err_f1, err_rss))

    print(f"F1 batch: {args.models} evaluations; subset RSS: 2^{args.p} models")
    print(f"{'backend':<8} {'F1 us/call':>11} {'RSS s':>9} {'max|dlogF1|':>12} {'max|dRSS|/RSS0':>15}")
    for name, t_f1, t_rss, e1, e2 in rows:
        print(f"{name:<8} {1e6 * t_f1 / args.models:>11.1f} {t_rss:>9.4f} {e1:>12.2e} {e2:>15.2e}")
    if len(rows) == 2:
        print(f"speed-up: F1 x{rows[0][1] / rows[1][1]:.1f}, RSS x{rows[0][2] / rows[1][2]:.1f}")


if __name__ == "__main__":
    main()
