import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyrelax.errors import EmptyInput, StableNeuron
from polyrelax.exact import enumerate_vertices, exact_hull, same_point_sets
from polyrelax.polytope import HPoly
from polyrelax.sblm import (
    SblmStats,
    activation,
    best_split,
    maxpool_spec,
    relu_spec,
    sample_graph,
    sblm,
    scurve_area,
    scurve_bounds,
    scurve_spec,
)

from conftest import K_A, K_B


def box(lo, hi):
    d = len(lo)
    return HPoly(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([lo, -np.asarray(hi)]))


def relu_graph_hull(p):
    """Exact hull of the ReLU graph over p: lift the vertices of every orthant piece."""
    k = p.dim
    pts = []
    for signs in np.ndindex(*(2,) * k):
        s = np.where(np.array(signs) == 1, 1.0, -1.0)
        piece = p.intersect(HPoly(np.diag(s), np.zeros(k)))
        V = enumerate_vertices(piece)
        if len(V):
            pts.append(np.hstack([V, np.maximum(V, 0.0)]))
    return exact_hull(np.vstack(pts))


def test_relu_spec_regions():
    spec = relu_spec(-2.0, 1.2)
    (neg, pos) = spec.regions
    assert neg.region.hi == 0.0 and np.isneginf(neg.region.lo)
    assert pos.region.lo == 0.0 and np.isposinf(pos.region.hi)
    x = np.linspace(-2, 0, 7)
    np.testing.assert_array_equal(neg.bounds.lower(x), 0.0)
    x = np.linspace(0, 1.2, 7)
    np.testing.assert_array_equal(pos.bounds.upper(x), x)
    np.testing.assert_array_equal(pos.bounds.lower(x), x)


def test_relu_spec_stable():
    with pytest.raises(StableNeuron):
        relu_spec(0.1, 2.0)
    with pytest.raises(StableNeuron):
        relu_spec(-1.0, 0.0)


def test_sigmoid_concave_piece_uses_chord():
    pair = scurve_bounds("sigmoid", 0.0, 2.0)
    chord = (activation("sigmoid", 2.0) - 0.5) / 2.0
    assert pair.lower.slope == pytest.approx(chord)
    x = np.linspace(0, 2, 200)
    assert np.all(pair.lower(x) <= activation("sigmoid", x) + 1e-12)


def test_tanh_split_pieces_are_sound():
    spec = scurve_spec("tanh", -1.0, 1.0, split=0.0)
    assert len(spec.regions) == 2
    for reg, (a, b) in zip(spec.regions, [(-1.0, 0.0), (0.0, 1.0)]):
        x = np.linspace(a, b, 200)
        f = np.tanh(x)
        assert np.all(reg.bounds.lower(x) <= f + 1e-12)
        assert np.all(reg.bounds.upper(x) >= f - 1e-12)
    # the piece on [0, 1] is concave: the lower line is the chord through the origin
    assert spec.regions[1].bounds.lower.const == pytest.approx(0.0, abs=1e-15)


def test_scurve_degenerate_interval():
    spec = scurve_spec("sigmoid", 0.3, 0.3)
    (reg,) = spec.regions
    v = activation("sigmoid", 0.3)
    assert reg.bounds.lower(0.3) == pytest.approx(v)
    assert reg.bounds.upper.slope == 0.0 and reg.bounds.upper.const == pytest.approx(v)


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(["sigmoid", "tanh"]),
    st.floats(-8, 8),
    st.floats(0, 10),
)
def test_scurve_bounds_enclose_function(kind, l, w):
    u = l + w
    pair = scurve_bounds(kind, l, u)
    x = np.linspace(l, u, 101)
    f = activation(kind, x)
    assert np.all(pair.lower(x) <= f + 1e-9)
    assert np.all(pair.upper(x) >= f - 1e-9)


def test_best_split_minimizes_area_on_grid():
    c = best_split("tanh", -2.0, 3.0)
    grid = np.linspace(-2.0, 3.0, 65)
    assert scurve_area("tanh", -2.0, 3.0, c) == pytest.approx(min(scurve_area("tanh", -2.0, 3.0, g) for g in grid))
    assert scurve_area("tanh", -2.0, 3.0, c) <= scurve_area("tanh", -2.0, 3.0, 3.0)


def test_maxpool_two_regions():
    spec = maxpool_spec(2, [[0, 1], [0, 1]])
    assert len(spec.regions) == 2
    r0, r1 = spec.regions
    assert r0.region.contains([[0.7, 0.2]])[0] and not r0.region.contains([[0.2, 0.7]])[0]
    assert r1.bounds.lower([0.2, 0.7]) == pytest.approx(0.7)


def test_maxpool_prunes_dominated():
    spec = maxpool_spec(2, [[5, 6], [0, 1]])
    (reg,) = spec.regions
    assert reg.bounds.upper([5.5, 0.3]) == pytest.approx(5.5)


def test_maxpool_active_region_matches_max(rng):
    b = np.sort(rng.normal(size=(3, 2)), axis=1)
    spec = maxpool_spec(3, b)
    x = rng.uniform(b[:, 0], b[:, 1], size=(1000, 3))
    for p in x:
        regs = [r for r in spec.regions if r.region.contains([p])[0]]
        assert regs
        assert regs[0].bounds.lower(p) == pytest.approx(p.max())


def test_two_neuron_example(octahedron):
    stats = SblmStats()
    K = sblm(None, octahedron, [relu_spec(-2.0, 2.0), relu_spec(-2.0, 1.2)], stats=stats)
    expect = HPoly(K_A, K_B)
    assert same_point_sets(enumerate_vertices(K), enumerate_vertices(expect))
    assert stats.hull_dims == [3, 3, 4]
    assert stats.quadrants == 4


def test_single_relu_is_triangle():
    K = sblm(None, box([-1.0], [1.0]), [relu_spec(-1.0, 1.0)])
    tri = HPoly([[0, 1], [-1, 1], [0.5, -1]], [0, 0, -0.5])
    assert same_point_sets(enumerate_vertices(K), enumerate_vertices(tri))


def test_relu_pair_equals_exact_hull(rng):
    for _ in range(10):
        c = rng.normal(size=2) * 0.3
        a = np.vstack([np.eye(2), -np.eye(2), [[1, 1], [-1, -1], [1, -1], [-1, 1]]])
        b = -rng.uniform(0.5, 2.0, size=8) + a @ c
        p = HPoly(a, b)
        V = enumerate_vertices(p)
        lo, hi = V.min(axis=0), V.max(axis=0)
        if np.any(lo >= 0) or np.any(hi <= 0):
            continue
        K = sblm(None, p, [relu_spec(l, u) for l, u in zip(lo, hi)])
        assert same_point_sets(enumerate_vertices(K), enumerate_vertices(relu_graph_hull(p)))


@pytest.mark.parametrize("kind", ["relu", "sigmoid", "tanh"])
def test_sblm_sound_on_samples(kind, rng):
    k = 3
    a = np.array([c for c in np.ndindex(3, 3, 3) if any(v != 1 for v in c)], float) - 1.0
    center = rng.normal(size=k) * 0.3
    b = a @ center - rng.uniform(0.8, 1.5, size=len(a)) * np.abs(a).sum(axis=1) ** 0.5
    p = HPoly(a, b)
    V = enumerate_vertices(p)
    lo, hi = V.min(axis=0), V.max(axis=0)
    if kind == "relu":
        specs = [relu_spec(l, u) for l, u in zip(lo, hi)]
    else:
        specs = [scurve_spec(kind, l, u) for l, u in zip(lo, hi)]
    stats = SblmStats()
    K = sblm(None, p, specs, stats=stats)
    pts = sample_graph(p, specs, 10_000, rng)
    assert len(pts) == 10_000
    assert K.residuals(pts).min() >= -1e-8
    # lifting never works in more than k + (units lifted so far) dimensions
    assert max(stats.hull_dims) <= 2 * k


def test_sblm_maxpool_sound(rng):
    p = box([-1.0, -0.5, 0.0], [1.0, 1.5, 0.8])
    spec = maxpool_spec(3, [[-1, 1], [-0.5, 1.5], [0, 0.8]])
    K = sblm(None, p, [spec])
    pts = sample_graph(p, [spec], 5000, rng)
    assert K.dim == 4
    assert K.residuals(pts).min() >= -1e-8


def test_sblm_quadrant_exactness(octahedron):
    # with a single ReLU the (x, y) graph lies on the output: y = x on x1 >= 0
    K = sblm(None, box([0.5], [1.0]).intersect(box([-1.0], [1.0])), [relu_spec(-1.0, 1.0)])
    assert not K.contains([[0.75, 0.5]]).any()
    assert K.contains([[0.75, 0.75]]).all()


def test_sblm_order_is_validated(octahedron):
    with pytest.raises(ValueError):
        sblm([0, 0], octahedron, [relu_spec(-2.0, 2.0), relu_spec(-2.0, 1.2)])


def test_sblm_empty_input():
    empty = HPoly([[1.0], [-1.0]], [1.0, 0.0])
    with pytest.raises(EmptyInput):
        sblm(None, empty, [relu_spec(-1.0, 1.0)])
