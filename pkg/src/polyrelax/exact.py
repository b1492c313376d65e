"""Exact polyhedral conversions by the classical double description method.

These routines add one constraint at a time and keep a complete set of
extreme rays, using the combinatorial adjacency test. They are exponential
in the worst case and meant for small inputs: the input polytope of a neuron
group, and reference results in tests and benchmarks.
"""
import itertools

import numpy as np
import scipy.linalg

from .errors import EmptyInput, UnboundedPolytope
from .polytope import DEFAULT_TOL, HPoly, VPoly, normalize_rows, unique_rows


def extreme_rays(constraints, tol=DEFAULT_TOL.incidence):
    """Extreme rays of the pointed cone ``{x | constraints @ x >= 0}``.

    Parameters
    ----------
    constraints : (m, D) array of full column rank D.

    Returns
    -------
    (n, D) array of unit-norm rays.
    """
    A, _ = normalize_rows(np.asarray(constraints, dtype=np.float64))
    m, D = A.shape
    if m < D:
        raise ValueError("cone is not pointed: fewer constraints than dimensions")
    _, _, piv = scipy.linalg.qr(A.T, pivoting=True, mode="economic")
    init = piv[:D]
    basis = A[init]
    if np.linalg.matrix_rank(basis, tol=1e-10) < D:
        raise ValueError("cone is not pointed: constraint matrix is rank deficient")
    R = np.linalg.inv(basis).T  # basis @ R[j] = e_j
    R, _ = normalize_rows(R)
    processed = np.zeros(m, dtype=bool)
    processed[init] = True
    zeros = np.zeros((D, m), dtype=bool)
    zeros[:, init] = np.abs(R @ basis.T) <= tol

    for j in range(m):
        if processed[j]:
            continue
        v = R @ A[j]
        plus = v > tol
        minus = v < -tol
        zero = ~plus & ~minus
        new_rays, new_zeros = [], []
        zp = zeros[:, processed]
        for p in np.flatnonzero(plus):
            for q in np.flatnonzero(minus):
                common = zp[p] & zp[q]
                if common.sum() < D - 2:
                    continue
                # adjacent iff no third ray's zero set contains the common zero set
                others = (zp[:, common].all(axis=1))
                others[p] = others[q] = False
                if others.any():
                    continue
                r = v[p] * R[q] - v[q] * R[p]
                r /= np.linalg.norm(r)
                z = zeros[p] & zeros[q]
                z[j] = True
                new_rays.append(r)
                new_zeros.append(z)
        keep = plus | zero
        zeros[:, j] = zero
        R = R[keep]
        zeros = zeros[keep]
        if new_rays:
            R = np.vstack([R, np.array(new_rays)])
            zeros = np.vstack([zeros, np.array(new_zeros)])
        processed[j] = True
    return R


def enumerate_vertices(h, tol=DEFAULT_TOL.incidence):
    """Vertices of a bounded polytope ``{x | a @ x >= b}``.

    Returns an empty ``(0, d)`` array for an empty polytope.

    Raises
    ------
    UnboundedPolytope
        If the polytope is nonempty and unbounded.
    """
    d = h.dim
    if h.m == 0:
        raise UnboundedPolytope("no constraints")
    rows = np.vstack([np.hstack([-h.b[:, None], h.a]), np.eye(1, d + 1)])
    if np.linalg.matrix_rank(h.a, tol=1e-10) < d:
        raise UnboundedPolytope("constraint normals do not span the space")
    R = extreme_rays(rows, tol)
    pts = R[:, 0] > tol
    if np.any(~pts) and np.any(pts):
        raise UnboundedPolytope("polytope has recession directions")
    V = R[pts, 1:] / R[pts, :1]
    return V[unique_rows(V, 9)]


def exact_hull(points, tol=DEFAULT_TOL.incidence):
    """Facets of ``conv(points)`` as an :class:`HPoly`.

    Works for point sets that are not full-dimensional: the affine hull is
    returned as pairs of opposite inequalities.
    """
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if P.size == 0:
        raise EmptyInput("no points")
    n, d = P.shape
    R = np.hstack([np.ones((n, 1)), P])
    # dual cone {y | R y >= 0}; its lineality space is null(R)
    _, s, vt = np.linalg.svd(R)
    rank = int((s > 1e-10 * max(1.0, s[0])).sum())
    Q = vt[:rank].T  # row space basis, (D, rank)
    L = vt[rank:]  # lineality basis
    rows = []
    if rank == 1:
        rays = np.empty((0, d + 1))
    else:
        Z = extreme_rays(R @ Q, tol)
        rays = Z @ Q.T
    rows = [rays]
    if len(L):
        rows += [L, -L]
    rows = np.vstack(rows)
    h = HPoly(rows[:, 1:], -rows[:, 0])
    return h.deduplicated()


def extreme_points(points, tol=DEFAULT_TOL.incidence):
    """The subset of ``points`` that are vertices of their convex hull (deduplicated)."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    P = P[unique_rows(P, 9)]
    h = exact_hull(P, tol)
    res = np.abs(h.residuals(P)) <= 1e-7
    d_aff = np.linalg.matrix_rank(P[1:] - P[0], tol=1e-9) if len(P) > 1 else 0
    keep = []
    for i in range(len(P)):
        act = h.a[res[i]]
        r = np.linalg.matrix_rank(act, tol=1e-9) if len(act) else 0
        # within the affine hull, the equality pairs contribute d - d_aff to the rank
        if r >= P.shape[1]:
            keep.append(i)
    if d_aff == 0:
        keep = [0]
    return P[keep]


def brute_force_vertices(h, tol=1e-9):
    """Vertices by solving every d-subset of constraints; for tiny inputs only."""
    d = h.dim
    out = []
    for idx in itertools.combinations(range(h.m), d):
        A = h.a[list(idx)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, h.b[list(idx)])
        if np.all(h.residuals(x)[0] >= -tol):
            out.append(x)
    if not out:
        return np.empty((0, d))
    V = np.array(out)
    return V[unique_rows(V, 8)]


def exact_dd(h):
    """Full double description (H, V) of a bounded polytope."""
    return h, VPoly(enumerate_vertices(h))


def same_point_sets(a, b, tol=1e-6):
    """Whether two point sets are equal as sets, up to ``tol`` in max-norm."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.size == 0 or b.size == 0:
        return a.size == b.size
    dist = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)
    return bool(np.all(dist.min(axis=1) <= tol) and np.all(dist.min(axis=0) <= tol))
