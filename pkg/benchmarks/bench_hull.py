"""Approximate hulls and multi-neuron constraints against the exact hull.

Usage::

    python benchmarks/bench_hull.py [--groups 20] [--fan-in 100] [--no-numba]

Part one times the hull of two random polytopes per dimension. Part two runs
3-ReLU groups with octahedral inputs and reports time, row count and Monte
Carlo volume ratio of SBLM against the exact hull of the graph.
"""
import argparse
import itertools
import os
import sys
import time

import numpy as np


def octahedral_group(rng, fan_in, k=3):
    C = np.array([c for c in itertools.product((-1.0, 0.0, 1.0), repeat=k) if any(c)])
    while True:
        W = rng.normal(size=(k, fan_in)) / np.sqrt(fan_in)
        b = rng.normal(scale=0.5, size=k)
        r = np.abs(W).sum(axis=1)
        if np.all(b - r < 0) and np.all(b + r > 0):
            return C, C @ b - np.abs(C @ W).sum(axis=1), b - r, b + r


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--groups", type=int, default=20)
    ap.add_argument("--fan-in", type=int, default=100)
    ap.add_argument("--pairs", type=int, default=20, help="polytope pairs per dimension")
    ap.add_argument("--no-numba", action="store_true")
    args = ap.parse_args()
    if args.no_numba:
        os.environ["POLYRELAX_DISABLE_NUMBA"] = "1"  # read when polyrelax is imported
    from polyrelax.exact import enumerate_vertices, exact_hull, extreme_points
    from polyrelax.pddm import convex_hull_approx
    from polyrelax.polytope import HPoly, VPoly
    from polyrelax.sblm import relu_spec, sblm

    rng = np.random.default_rng(0)

    def random_dd(d):
        pts = rng.normal(size=(int(rng.integers(d + 1, 3 * d + 3)), d)) + rng.normal(size=d)
        return exact_hull(pts), VPoly(extreme_points(pts))

    convex_hull_approx(random_dd(2), random_dd(2))  # compile kernels
    print(f"{'dim':>3}{'pddm ms':>10}{'exact ms':>10}{'rows':>7}{'exact rows':>11}")
    for d in range(2, 7):
        t_a = t_e = rows_a = rows_e = 0.0
        for _ in range(args.pairs):
            p, q = random_dd(d), random_dd(d)
            t0 = time.perf_counter()
            H, _ = convex_hull_approx(p, q)
            t_a += time.perf_counter() - t0
            t0 = time.perf_counter()
            E = exact_hull(np.vstack([p[1].vertices, q[1].vertices]))
            t_e += time.perf_counter() - t0
            rows_a += H.m
            rows_e += E.m
        n = args.pairs
        print(f"{d:>3}{1e3 * t_a / n:>10.2f}{1e3 * t_e / n:>10.2f}{rows_a / n:>7.1f}{rows_e / n:>11.1f}")

    print(f"\n3-ReLU groups, fan-in {args.fan_in}, numba {'off' if args.no_numba else 'on'}")
    ratios, rows, t_s, t_e = [], [], [], []
    for _ in range(args.groups):
        C, beta, lo, hi = octahedral_group(rng, args.fan_in)
        P = HPoly(C, beta)
        t0 = time.perf_counter()
        K = sblm(None, P, [relu_spec(a, b) for a, b in zip(lo, hi)])
        t_s.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        pts = []
        for s in itertools.product((1.0, -1.0), repeat=3):
            V = enumerate_vertices(P.intersect(HPoly(np.diag(s), np.zeros(3))))
            if len(V):
                pts.append(np.hstack([V, np.maximum(V, 0.0)]))
        pts = np.vstack(pts)
        E = exact_hull(pts)
        t_e.append(time.perf_counter() - t0)
        X = rng.uniform(pts.min(axis=0), pts.max(axis=0), size=(100000, 6))
        ratios.append(K.contains(X, 1e-12).sum() / E.contains(X, 1e-12).sum())
        rows.append((K.m, E.m))
    rows = np.array(rows)
    print(f"time per group   sblm {1e3 * np.mean(t_s):.1f} ms, exact {1e3 * np.mean(t_e):.1f} ms "
          f"(ratio {np.mean(t_s) / np.mean(t_e):.3f})")
    print(f"rows per group   sblm {rows[:, 0].mean():.1f}, exact {rows[:, 1].mean():.1f}")
    print(f"volume ratio     mean {np.mean(ratios):.4f}, max {np.max(ratios):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
