import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from polyrelax import _kernels
from polyrelax._accel import HAVE_NUMBA


def random_case(rng, n=12, D=4, q=3):
    rays = rng.normal(size=(n, D))
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    added = rng.normal(size=(q, D))
    return rays, rays @ added.T


@pytest.mark.parametrize("seed", range(5))
def test_shoot_pairs_parity(seed):
    rng = np.random.default_rng(seed)
    rays, vals = random_case(rng)
    worst = vals.min(axis=1)
    src, dst = np.flatnonzero(worst >= 0), np.flatnonzero(worst < 0)
    a = _kernels.shoot_pairs_numba(rays, vals, src, dst, 1e-8)
    b = _kernels.shoot_pairs_numpy(rays, vals, src, dst, 1e-8)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, atol=1e-12)


def test_shoot_pairs_hits_first_plane():
    rays = np.array([[1.0, 0.0], [-1.0, 0.0]])
    added = np.array([[1.0, 0.5], [1.0, 0.2]])  # both violated at the second ray
    vals = rays @ added.T
    pts, hit, step = _kernels.shoot_pairs(rays, vals, np.array([0]), np.array([1]), 1e-8)
    assert hit[0] == 0
    assert abs(pts[0] @ added[0]) < 1e-12
    assert pts[0] @ added[1] >= -1e-12


@pytest.mark.parametrize("seed", range(5))
def test_clip_pairs_parity(seed):
    rng = np.random.default_rng(seed)
    rays, vals = random_case(rng, n=15, D=5, q=4)
    a = _kernels.clip_pairs_numba(rays, vals, 1e-8)
    b = _kernels.clip_pairs_numpy(rays, vals, 1e-8)
    assert len(a[0]) == len(b[0])
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, atol=1e-12)


def test_clip_pairs_points_lie_on_added_planes(rng):
    rays, vals = random_case(rng, n=10, D=4, q=3)
    added = np.linalg.lstsq(rays, vals, rcond=None)[0].T
    pts, hit, par = _kernels.clip_pairs(rays, vals, 1e-8)
    assert len(pts)
    on = np.abs(np.einsum("ij,ij->i", pts, added[hit]))
    assert on.max() < 1e-9
    # clipped points satisfy every added row
    assert (pts @ added.T).min() > -1e-9
    assert np.all(par[:, 0] < par[:, 1])


def cube_cone():
    verts = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
    rays = np.hstack([np.ones((8, 1)), verts])
    faces = np.vstack([np.hstack([np.ones((3, 1)), -np.eye(3)]), np.hstack([np.ones((3, 1)), np.eye(3)])])
    return rays, faces


@pytest.mark.parametrize("seed", range(5))
def test_face_points_parity(seed):
    rng = np.random.default_rng(seed)
    rays, faces = cube_cone()
    added = np.hstack([rng.uniform(0.2, 1.0, size=(3, 1)), rng.normal(size=(3, 3))])
    vals = rays @ added.T
    a = _kernels.face_points_numba(rays, faces, vals, 1e-8)
    b = _kernels.face_points_numpy(rays, faces, vals, 1e-8)
    assert a.shape == b.shape
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_face_points_lie_on_two_added_planes_of_a_face():
    rays, faces = cube_cone()
    added = np.array([[0.5, 1.0, 1.0, 0.0], [0.5, 1.0, -1.0, 0.0]])
    pts = _kernels.face_points(rays, faces, rays @ added.T, 1e-8)
    assert len(pts)
    # both added rows are active, and each point sits on a facet of the cube
    np.testing.assert_allclose(pts @ added.T, 0.0, atol=1e-12)
    assert (pts @ faces.T).min() > -1e-12
    assert (np.abs(pts @ faces.T) < 1e-12).any(axis=1).all()
    # the line x1 = -0.5, x2 = 0 crosses the faces x3 = +-1
    x = pts[:, 1:] / pts[:, :1]
    assert {tuple(np.round(r, 12)) for r in x} == {(-0.5, 0.0, 1.0), (-0.5, 0.0, -1.0)}


@pytest.mark.parametrize("seed", range(5))
def test_a_irredundant_parity(seed):
    rng = np.random.default_rng(seed)
    inc = rng.random((40, 70)) < 0.3
    inc[5] = inc[3] & inc[7]  # plant subsets
    inc[9] = inc[3]
    a = _kernels.a_irredundant_order_numba(inc)
    b = _kernels.a_irredundant_order_numpy(inc)
    np.testing.assert_array_equal(a, b)
    kept = inc[a]
    for i in range(len(kept)):
        for j in range(len(kept)):
            if i != j:
                assert not np.all(kept[i] <= kept[j])


def test_pack_rows_round_trip(rng):
    inc = rng.random((3, 130)) < 0.5
    packed = _kernels.pack_rows(inc)
    assert packed.shape == (3, 3)
    bits = np.unpackbits(packed.view(np.uint8), axis=1, bitorder="little")[:, :130]
    np.testing.assert_array_equal(bits.astype(bool), inc)


def test_env_flag_disables_numba():
    env = dict(os.environ, POLYRELAX_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from polyrelax._accel import use_numba; print(use_numba())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "False"


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_numba_is_used_by_default():
    assert _kernels.use_numba()
