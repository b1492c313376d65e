import numpy as np
import pytest

from polyrelax.polytope import HPoly

# input polytope of the two-neuron ReLU example
OCTAHEDRON_A = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [0.0, -1.0]])
OCTAHEDRON_B = np.array([-2.0, -2.0, -2.0, -2.0, -1.2])
OCTAHEDRON_VERTICES = np.array([[2.0, 0.0], [0.8, 1.2], [-0.8, 1.2], [-2.0, 0.0], [0.0, -2.0]])

# multi-neuron constraints over (x1, x2, y1, y2) for that example
K_A = np.array([
    [1.0, 1.0, -2.0, -2.0],
    [0.0, 0.375, 0.0, -1.0],
    [-1.0, 0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0, 1.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
])
K_B = np.array([-2.0, -0.75, 0.0, 0.0, 0.0, 0.0])

# (name, passed, detail) of every acceptance criterion that ran
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name, ok, detail in ACCEPTANCE:
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def octahedron():
    return HPoly(OCTAHEDRON_A, OCTAHEDRON_B)


@pytest.fixture
def k_polytope():
    return HPoly(K_A, K_B)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_polytope(rng, d, n=None, scale=1.0):
    """Hull of random points around a random center; returns (HPoly, vertices)."""
    from polyrelax.exact import exact_hull, extreme_points

    n = n or int(rng.integers(d + 1, 3 * d + 3))
    pts = rng.normal(size=(n, d)) * scale + rng.normal(size=d)
    return exact_hull(pts), extreme_points(pts)
