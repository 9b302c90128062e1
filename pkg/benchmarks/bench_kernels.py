"""Compare the compiled and pure-Python kernels on representative sizes.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from qmarkov.kernels import load


def _doubly_stochastic(n: int, terms: int, rng) -> np.ndarray:
    w = rng.dirichlet(np.ones(terms))
    out = np.zeros((n, n))
    for lam in w:
        out[np.arange(n), rng.permutation(n)] += lam
    return out


def cases(rng):
    for n in (8, 32):
        R = _doubly_stochastic(n, 12, rng)
        yield f"bottleneck_matching n={n}", lambda k, R=R: k.bottleneck_matching(R, 1e-15)
    for q in (6, 10):
        angles = rng.uniform(0, np.pi / 2, (1 << q) - 1)
        state = np.zeros(1 << q, dtype=complex)
        yield f"apply_rotation_tree q={q}", lambda k, a=angles, s=state, q=q: k.apply_rotation_tree(s.copy(), a, q)
    for n in (16, 64):
        P = rng.random((n, n))
        P /= P.sum(axis=1, keepdims=True)
        sp = np.sqrt(rng.dirichlet(np.ones(n)))
        yield f"cross_terms n={n}", lambda k, sp=sp, P=P: k.cross_terms(sp, P)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = load("python")
    try:
        cy = load("cython")
    except ImportError:
        cy = None
        print("compiled extension not built; timing the Python kernels only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in cases(rng):
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:32s} {t_py:12.3f}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {t_py:12.3f} {t_cy:12.3f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
