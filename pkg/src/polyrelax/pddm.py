"""Partial double description method: batch intersection and approximate convex hulls.

The hull of two polytopes is computed in the dual: the dual cone of a
polytope has the polytope's vertices as constraints, so intersecting the two
dual cones gives the dual of the hull. Intersecting PDDs under-approximates
the dual generator set, which over-approximates the hull's H-representation.
"""
import numpy as np
from scipy.optimize import linprog

from . import _kernels
from .errors import DegenerateRay, EmptyInput
from .polytope import (
    DEFAULT_TOL,
    HPoly,
    Pdd,
    VertexClass,
    VPoly,
    dehomogenize_rows,
    dualize,
    enforce_a_irredundancy,
    normalize_rows,
    pdd_from_dd,
    unique_rows,
)


def _added_rows(added, D, tol):
    added = np.asarray(added, dtype=np.float64).reshape(-1, D)
    added, norms = normalize_rows(added, tol.zero)
    return added[norms > tol.zero]


def classify_rays(p, added):
    """Split the rays of ``p`` by the sign of their worst value on ``added``.

    A ray is in ``plus`` if it satisfies every added row strictly, in
    ``minus`` if it violates one beyond ``tol.incidence``, else in ``zero``.
    """
    n = len(p.rays)
    added = _added_rows(added, p.constraints.shape[1], p.tol)
    if len(added) == 0:
        return VertexClass(np.arange(n), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    worst = (p.rays @ added.T).min(axis=1)
    tol = p.tol.incidence
    return VertexClass(
        np.flatnonzero(worst > tol),
        np.flatnonzero(np.abs(worst) <= tol),
        np.flatnonzero(worst < -tol),
    )


def ray_shoot(r_plus, r_minus, added, tol=DEFAULT_TOL.incidence):
    """First point on the segment ``r_plus -> r_minus`` where an added row becomes active.

    Raises
    ------
    DegenerateRay
        If ``r_minus`` violates no row, or ``r_plus`` is already tight on a
        row that ``r_minus`` violates.
    """
    r_plus = np.asarray(r_plus, dtype=np.float64)
    r_minus = np.asarray(r_minus, dtype=np.float64)
    added = np.atleast_2d(np.asarray(added, dtype=np.float64))
    rays = np.vstack([r_plus, r_minus])
    pts, hit, _ = _kernels.shoot_pairs(rays, rays @ added.T, np.array([0]), np.array([1]), tol)
    if hit[0] < 0:
        raise DegenerateRay("no crossing between the two rays")
    return pts[0]


def batch_intersect(p, added, pairs="all", irredundant=True):
    """Under-approximate ``p`` intersected with all rows of ``added`` at once.

    Rays satisfying the added rows are kept. New rays are found on segments
    between existing rays, at the points where the segment enters or leaves
    the region cut out by the added rows.

    Parameters
    ----------
    p : Pdd
    added : (q, D) array of cone rows.
    pairs : {"all", "faces", "plus_minus"}
        ``"plus_minus"`` shoots only from rays satisfying all added rows
        (strictly or with equality) to violating rays and keeps the first
        crossing. ``"all"`` clips the segment between every pair of rays
        with at least one violating ray and keeps both ends of the clipped
        segment. The second finds every extremal ray that lies on an edge of
        ``p``, which makes the bidirectional intersection exact for cones of
        dimension up to four. ``"faces"`` adds to ``"all"`` the points on
        2-faces of ``p`` where two added rows are active
        (:func:`polyrelax._kernels.face_points`). This recovers hull facets
        that touch both inputs along lower-dimensional faces, at a much
        higher ray count.
    irredundant : bool
        Enforce A-irredundancy on the result.
    """
    D = p.constraints.shape[1]
    added = _added_rows(added, D, p.tol)
    if len(added) == 0:
        return p
    constraints = np.vstack([p.constraints, added])
    cls = classify_rays(p, added)
    kept = p.rays[np.sort(np.concatenate([cls.plus, cls.zero]))]
    vals = p.rays @ added.T
    if pairs in ("all", "faces"):
        pts, _, _ = _kernels.clip_pairs(p.rays, vals, p.tol.incidence)
        if pairs == "faces":
            pts = np.vstack([pts, _kernels.face_points(p.rays, p.constraints, vals, p.tol.incidence)])
    elif pairs == "plus_minus":
        src = np.sort(np.concatenate([cls.plus, cls.zero]))
        pts, hit, _ = _kernels.shoot_pairs(p.rays, vals, src, cls.minus, p.tol.incidence)
        pts = pts[hit >= 0]
    else:
        raise ValueError(f"unknown pair mode {pairs!r}")
    if len(pts):
        pts = pts[np.linalg.norm(pts, axis=1) > 1e-9]  # opposite rays of a lineality pair
    rays = np.vstack([kept, pts]) if len(pts) else kept
    if len(rays):
        rays, _ = normalize_rows(rays, p.tol.zero)
        rays = rays[unique_rows(rays, 12)]
        rays = rays[(rays @ constraints.T).min(axis=1) >= -p.tol.feas]
    out = Pdd(constraints, rays, shift=p.shift, tol=p.tol)
    return enforce_a_irredundancy(out) if irredundant else out


def pddm_intersect(p, q, pairs="all"):
    """Intersect two PDDs by batch intersection in both directions.

    The generator sets of ``p & q.constraints`` and ``q & p.constraints`` are
    merged and made A-irredundant. Constraint rows are those of ``p``
    followed by those of ``q``.
    """
    if p.constraints.shape[1] != q.constraints.shape[1]:
        raise ValueError("PDDs live in different dimensions")
    a = batch_intersect(p, q.constraints, pairs)
    b = batch_intersect(q, p.constraints, pairs)
    constraints = np.vstack([p.constraints, q.constraints])
    rays = np.vstack([a.rays, b.rays])
    if len(rays):
        rays = rays[unique_rows(rays, 12)]
    return enforce_a_irredundancy(Pdd(constraints, rays, shift=p.shift, tol=p.tol))


def _as_dd(poly):
    h, v = poly
    if not isinstance(v, VPoly):
        v = VPoly(v)
    if v.n == 0:
        raise EmptyInput("polytope has no generators")
    if not v.bounded:
        raise ValueError("hull inputs must be bounded")
    return h, v


def _lp_redundant(a, b, i, tol):
    others = np.delete(np.arange(len(b)), i)
    res = linprog(a[i], A_ub=-a[others], b_ub=-b[others], bounds=(None, None), method="highs")
    return res.status == 0 and res.fun >= b[i] - tol


def remove_redundant_rows(h, tol=1e-9):
    """Drop rows implied by the remaining ones, one LP per row."""
    a, b = np.array(h.a), np.array(h.b)
    keep = np.ones(len(b), dtype=bool)
    for i in range(len(b)):
        idx = np.flatnonzero(keep)
        pos = int(np.searchsorted(idx, i))
        if _lp_redundant(a[idx], b[idx], pos, tol):
            keep[i] = False
    return HPoly(a[keep], b[keep], h.tol)


def convex_hull_approx(p1, p2, remove_redundant=False, stats=None, pairs="all"):
    """Over-approximate ``conv(p1 | p2)`` for two bounded polytopes.

    Parameters
    ----------
    p1, p2 : tuple of (HPoly, VPoly)
        Double descriptions of the inputs. The vertex sets may be partial.
    remove_redundant : bool
        Additionally drop rows implied by the others (one LP each).
    stats : dict, optional
        Receives ``dim`` and ``rows`` of the call for instrumentation.
    pairs : str
        Ray pairing of the batch intersections, see :func:`batch_intersect`.

    Returns
    -------
    (HPoly, VPoly)
        Constraints valid for every input vertex, and the union of the input
        vertices.
    """
    h1, v1 = _as_dd(p1)
    h2, v2 = _as_dd(p2)
    if h1.dim != h2.dim:
        raise ValueError("inputs have different dimensions")
    tol = h1.tol
    center = 0.5 * (v1.vertices.mean(axis=0) + v2.vertices.mean(axis=0))
    d1 = dualize(pdd_from_dd(h1, v1, center))
    d2 = dualize(pdd_from_dd(h2, v2, center))
    res = pddm_intersect(d1, d2, pairs)
    rows = res.rays
    verts = np.vstack([v1.vertices, v2.vertices])
    verts = verts[unique_rows(verts, 12)]
    if len(rows):
        rows = rows[np.linalg.norm(rows[:, 1:], axis=1) > 1e-9]
    h = dehomogenize_rows(rows, center, tol).deduplicated()
    if h.m:
        # rows slack at every vertex are not supporting; the union hull never touches them
        slack = h.residuals(verts).min(axis=0)
        h = HPoly(h.a[slack <= 1e-7], h.b[slack <= 1e-7], tol)
    if remove_redundant and h.m > 1:
        h = remove_redundant_rows(h)
    if stats is not None:
        stats["dim"] = h1.dim
        stats["rows"] = h.m
    return h, VPoly(verts)
