"""Compiled kernels against their numpy fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the median time of each kernel variant and checks that both return
the same result.
"""
import argparse
import itertools
import timeit

import numpy as np

from polyrelax import _kernels
from polyrelax._accel import HAVE_NUMBA


def pair_case(rng, n, D, q):
    rays = rng.normal(size=(n, D))
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    return rays, rays @ rng.normal(size=(q, D)).T


def face_case(d):
    # cube cone: rays on many common facets, so the triple filter keeps a lot
    verts = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
    rays = np.hstack([np.ones((len(verts), 1)), verts])
    faces = np.vstack([np.hstack([np.ones((d, 1)), -np.eye(d)]), np.hstack([np.ones((d, 1)), np.eye(d)])])
    added = np.hstack([np.full((4, 1), 0.5), np.random.default_rng(0).normal(size=(4, d))])
    return rays, faces, rays @ added.T


def cases(rng):
    rays, vals = pair_case(rng, 300, 7, 3)
    worst = vals.min(axis=1)
    src, dst = np.flatnonzero(worst >= 0), np.flatnonzero(worst < 0)
    yield ("shoot_pairs n=300", _kernels.shoot_pairs_numba, _kernels.shoot_pairs_numpy, (rays, vals, src, dst, 1e-8))
    rays, vals = pair_case(rng, 200, 7, 26)
    yield ("clip_pairs n=200", _kernels.clip_pairs_numba, _kernels.clip_pairs_numpy, (rays, vals, 1e-8))
    rays, faces, vals = face_case(5)
    yield ("face_points 5-cube", _kernels.face_points_numba, _kernels.face_points_numpy, (rays, faces, vals, 1e-8))
    inc = rng.random((2000, 60)) < 0.3
    yield ("a_irredundant n=2000", _kernels.a_irredundant_order_numba, _kernels.a_irredundant_order_numpy, (inc,))


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.shape(a) == np.shape(b) and np.allclose(a, b, atol=1e-12)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba unavailable (or disabled); nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  equal")
    for name, fast, slow, a in cases(rng):
        fast(*a)  # compile
        t_fast = np.median(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat))
        t_slow = np.median(timeit.repeat(lambda: slow(*a), number=1, repeat=args.repeat))
        print(f"{name:<24}{1e3 * t_fast:>10.2f}{1e3 * t_slow:>10.2f}{t_slow / t_fast:>8.1f}x  {same(fast(*a), slow(*a))}")


if __name__ == "__main__":
    main()
