"""Polyhedral data structures: H-/V-representations and the partial double description.

Conventions
-----------
* An :class:`HPoly` is ``{x | a @ x >= b}``.
* Homogenized coordinates are ``x' = [1, x]``; a constraint ``a @ x >= b``
  becomes the cone row ``[-b, a]`` and a vertex ``v`` the ray ``[1, v]``.
* A :class:`Pdd` stores constraint rows and rays of a cone, both scaled to
  unit Euclidean norm, plus the boolean incidence matrix. Every ray satisfies
  every constraint (up to ``tol.feas``); the rays may under-approximate the
  cone described by the constraints.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import OriginNotInterior, ParseError, UnboundedPolytope


@dataclass(frozen=True)
class Tolerances:
    zero: float = 1e-10
    incidence: float = 1e-8
    feas: float = 1e-8


DEFAULT_TOL = Tolerances()


def normalize_rows(mat, zero=DEFAULT_TOL.zero):
    """Scale rows to unit 2-norm; rows already at unit norm (to 4 ulp) are untouched.

    Returns the scaled matrix and the row norms. Rows with norm <= ``zero``
    are left as they are.
    """
    mat = np.array(mat, dtype=np.float64, copy=True)
    if mat.size == 0:
        return mat, np.zeros(len(mat))
    norms = np.linalg.norm(mat, axis=1)
    scale = (norms > zero) & (np.abs(norms - 1.0) > 4 * np.finfo(float).eps)
    mat[scale] /= norms[scale, None]
    return mat, norms


def unique_rows(mat, decimals=10):
    """Indices of the first occurrence of every row (rounded), in original order."""
    if len(mat) == 0:
        return np.empty(0, dtype=np.int64)
    key = np.round(mat, decimals) + 0.0  # fold -0.0 into 0.0
    _, first = np.unique(key, axis=0, return_index=True)
    return np.sort(first)


@dataclass(frozen=True, eq=False)
class HPoly:
    """Polyhedron ``{x | a @ x >= b}``.

    Rows are normalized to unit norm of ``a`` on construction. Vacuous rows
    (``a == 0`` and ``b <= 0``) are dropped; an infeasible ``0 >= b > 0`` row
    raises ``ValueError``.
    """

    a: np.ndarray
    b: np.ndarray
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim != 2:
            if a.size == 0:
                raise ValueError("empty constraint matrix needs an explicit (0, d) shape")
            a = a.reshape(1, -1)
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"a has {a.shape[0]} rows but b has {b.shape[0]} entries")
        if a.shape[1] < 1:
            raise ValueError("dimension must be >= 1")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("constraint data must be finite")
        norms = np.linalg.norm(a, axis=1)
        vacuous = norms <= self.tol.zero
        if np.any(vacuous & (b > self.tol.zero)):
            raise ValueError("infeasible constraint 0 >= b with b > 0")
        keep = ~vacuous
        a, b, norms = a[keep], b[keep], norms[keep]
        scale = np.abs(norms - 1.0) > 4 * np.finfo(float).eps
        a = a.copy()
        b = b.copy()
        a[scale] /= norms[scale, None]
        b[scale] /= norms[scale]
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.a.shape[1]

    @property
    def m(self):
        return self.a.shape[0]

    def residuals(self, points):
        """``a @ x - b`` for every point (rows) and constraint (columns)."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return points @ self.a.T - self.b

    def contains(self, points, tol=None):
        tol = self.tol.feas if tol is None else tol
        if self.m == 0:
            return np.ones(len(np.atleast_2d(points)), dtype=bool)
        return np.all(self.residuals(points) >= -tol, axis=1)

    def intersect(self, other):
        return HPoly(np.vstack([self.a, other.a]), np.concatenate([self.b, other.b]), self.tol)

    def deduplicated(self):
        rows = np.hstack([self.a, self.b[:, None]])
        keep = unique_rows(rows)
        return HPoly(self.a[keep], self.b[keep], self.tol)

    def translated(self, shift):
        """The polytope moved by ``+shift``: ``{x + shift | x in self}``."""
        shift = np.asarray(shift, dtype=np.float64)
        return HPoly(self.a, self.b + self.a @ shift, self.tol)

    def __eq__(self, other):
        if not isinstance(other, HPoly):
            return NotImplemented
        return (
            self.a.shape == other.a.shape
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class VPoly:
    """Convex hull of ``vertices`` plus the cone of recession ``directions``."""

    vertices: np.ndarray
    directions: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2:
            v = v.reshape(-1, v.shape[-1] if v.ndim else 1)
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        d = self.directions
        d = np.empty((0, v.shape[1])) if d is None else np.asarray(d, dtype=np.float64).reshape(-1, v.shape[1])
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "directions", d)

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n(self):
        return self.vertices.shape[0]

    @property
    def bounded(self):
        return len(self.directions) == 0


@dataclass(frozen=True, eq=False)
class VertexClass:
    plus: np.ndarray
    zero: np.ndarray
    minus: np.ndarray


@dataclass(frozen=True, eq=False)
class Pdd:
    """Partial double description of a polyhedral cone in homogenized coordinates.

    Attributes
    ----------
    constraints : (m, d+1) array
        Exact H-representation; the cone is ``{x' | constraints @ x' >= 0}``.
    rays : (n, d+1) array
        Generators, each satisfying all constraints.
    incidence : (n, m) bool array
        ``incidence[i, j]`` iff constraint ``j`` is active at ray ``i``.
    shift : (d,) array
        Translation applied before homogenizing; dehomogenization adds it back.
    """

    constraints: np.ndarray
    rays: np.ndarray
    incidence: np.ndarray = None
    shift: np.ndarray = None
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        c = np.asarray(self.constraints, dtype=np.float64)
        r = np.asarray(self.rays, dtype=np.float64)
        D = c.shape[1] if c.ndim == 2 and c.shape[1] else (r.shape[1] if r.ndim == 2 else None)
        if D is None:
            raise ValueError("cannot infer the homogenized dimension")
        c = c.reshape(-1, D)
        r = r.reshape(-1, D)
        c, _ = normalize_rows(c, self.tol.zero)
        r, _ = normalize_rows(r, self.tol.zero)
        inc = self.incidence
        if inc is None:
            inc = np.abs(r @ c.T) <= self.tol.incidence if len(r) and len(c) else np.zeros((len(r), len(c)), dtype=bool)
        inc = np.asarray(inc, dtype=bool).reshape(len(r), len(c))
        shift = np.zeros(D - 1) if self.shift is None else np.asarray(self.shift, dtype=np.float64).reshape(D - 1)
        for name, val in (("constraints", c), ("rays", r), ("incidence", inc), ("shift", shift)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dim(self):
        """Dimension of the (dehomogenized) polytope."""
        return self.constraints.shape[1] - 1

    def slack(self):
        """``rays @ constraints.T``; nonnegative for a sound PDD."""
        return self.rays @ self.constraints.T

    def is_sound(self, tol=None):
        tol = self.tol.feas if tol is None else tol
        if len(self.rays) == 0 or len(self.constraints) == 0:
            return True
        return bool(np.all(self.slack() >= -tol))


def _translate_rows(a, b, shift):
    """Rows of the polytope translated by ``-shift`` (so that ``shift`` maps to 0)."""
    return a, b - a @ shift


def homogenize(p, shift=None):
    """Cone rows ``[-b, a]`` of ``p`` (optionally translated by ``-shift``), no rays."""
    d = p.dim
    shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=np.float64)
    a, b = _translate_rows(p.a, p.b, shift)
    rows = np.hstack([-b[:, None], a])
    return Pdd(rows, np.empty((0, d + 1)), shift=shift, tol=p.tol)


def homogenize_points(points, shift=None):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if shift is not None:
        points = points - shift
    return np.hstack([np.ones((len(points), 1)), points])


def pdd_from_dd(h, v, shift=None):
    """PDD of a polytope given as H-representation plus (under-approximating) vertices."""
    base = homogenize(h, shift)
    rays = homogenize_points(v.vertices, base.shift) if v.n else np.empty((0, h.dim + 1))
    return Pdd(base.constraints, rays, shift=base.shift, tol=h.tol)


def dehomogenize_rows(rows, shift, tol=DEFAULT_TOL):
    """H-representation from cone rows ``[c0, a]`` (``c0 + a @ x >= 0``), shift undone."""
    rows = np.asarray(rows, dtype=np.float64)
    d = rows.shape[1] - 1
    a = rows[:, 1:]
    b = -rows[:, 0] + a @ np.asarray(shift)
    return HPoly(a.reshape(-1, d), b, tol)


def dehomogenize(c, require_bounded=False):
    """Split a PDD back into an H-representation and a V-representation.

    Rays with first coordinate above ``tol.zero`` become vertices; the others
    are recession directions. The stored shift is added back to vertices and
    folded into the constraint offsets.

    Raises
    ------
    UnboundedPolytope
        If ``require_bounded`` and recession directions exist.
    """
    tol = c.tol
    h = dehomogenize_rows(c.constraints, c.shift, tol)
    r = c.rays
    if len(r) and np.any(r[:, 0] < -tol.zero):
        raise ValueError("rays must have a nonnegative homogenizing coordinate")
    pts = r[:, 0] > tol.zero
    vertices = r[pts, 1:] / r[pts, :1] + c.shift
    dirs = r[~pts, 1:]
    if require_bounded and len(dirs):
        raise UnboundedPolytope(f"{len(dirs)} recession direction(s) present")
    return h, VPoly(vertices.reshape(-1, c.dim), dirs)


def dualize(p, require_origin_interior=False):
    """Dual PDD: constraints and rays swap roles, incidence is transposed.

    This is cone (polar) duality ``{y | x @ y >= 0 for all x in cone}``, which
    is valid for any pointed cone, so flat polytopes are allowed. At
    ``x'_0 = 1`` the dual of a polytope containing the origin in its interior
    is the negated polar ``{y | v @ y >= -1}``.

    Raises
    ------
    OriginNotInterior
        Only with ``require_origin_interior``: some constraint of ``p`` is not
        strictly satisfied at the (shifted) origin.
    """
    if require_origin_interior and len(p.constraints) and np.any(p.constraints[:, 0] <= p.tol.zero):
        raise OriginNotInterior("a constraint is active or violated at the origin")
    return Pdd(p.rays, p.constraints, p.incidence.T, p.shift, p.tol)


def compute_incidence(p):
    """Same PDD with the incidence matrix recomputed from the numeric slack."""
    inc = np.abs(p.slack()) <= p.tol.incidence if len(p.rays) and len(p.constraints) else None
    return replace(p, incidence=inc)


def enforce_a_irredundancy(p):
    """Remove every ray whose active set is contained in a retained ray's active set.

    Rays are processed by descending active-constraint count (stable, so the
    earliest index survives among equal sets). The result keeps that order.
    """
    if len(p.rays) <= 1:
        return p
    keep = _kernels.a_irredundant_order(p.incidence)
    return replace(p, rays=p.rays[keep], incidence=p.incidence[keep])


def vertex_rank(h, point, tol=DEFAULT_TOL.incidence):
    """Number of linearly independent constraints of ``h`` active at ``point``."""
    res = h.residuals(point)[0]
    act = h.a[np.abs(res) <= tol]
    if len(act) == 0:
        return 0
    return int(np.linalg.matrix_rank(act, tol=1e-9))


# --------------------------------------------------------------------------
# text format


def _fmt(x):
    return repr(float(x))


def format_hpoly(p):
    """One constraint per line: ``c1 ... cd >= b``."""
    lines = [f"# hpoly dim={p.dim} rows={p.m}"]
    for row, rhs in zip(p.a, p.b):
        lines.append(" ".join(_fmt(v) for v in row) + " >= " + _fmt(rhs))
    return "\n".join(lines) + "\n"


def parse_hpoly(text, source=None, dim=None):
    rows, rhs = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if dim is None and raw.strip().startswith("# hpoly"):
                for tok in raw.split():
                    if tok.startswith("dim="):
                        try:
                            dim = int(tok[4:])
                        except ValueError:
                            pass
            continue
        if ">=" not in line:
            raise ParseError("expected 'c1 ... cd >= b'", lineno, source)
        lhs, _, right = line.partition(">=")
        try:
            coeffs = [float(t) for t in lhs.split()]
            b = float(right.strip())
        except ValueError as exc:
            raise ParseError(f"bad number ({exc})", lineno, source) from None
        if not coeffs:
            raise ParseError("no coefficients", lineno, source)
        if rows and len(coeffs) != len(rows[0]):
            raise ParseError(f"expected {len(rows[0])} coefficients, got {len(coeffs)}", lineno, source)
        if dim is not None and len(coeffs) != dim:
            raise ParseError(f"expected {dim} coefficients, got {len(coeffs)}", lineno, source)
        rows.append(coeffs)
        rhs.append(b)
    if not rows:
        if dim is None:
            raise ParseError("no constraints and no dimension header", None, source)
        return HPoly(np.empty((0, dim)), np.empty(0))
    try:
        return HPoly(np.array(rows), np.array(rhs))
    except ValueError as exc:
        raise ParseError(str(exc), None, source) from None


def read_hpoly(path):
    with open(path) as fh:
        return parse_hpoly(fh.read(), source=str(path))


def write_hpoly(path, p):
    with open(path, "w") as fh:
        fh.write(format_hpoly(p))


def format_vpoly(v):
    lines = [f"# vpoly dim={v.dim} vertices={v.n}"]
    lines += [" ".join(_fmt(x) for x in row) for row in v.vertices]
    return "\n".join(lines) + "\n"


def parse_vpoly(text, source=None):
    pts = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            pts.append([float(t) for t in line.split()])
        except ValueError as exc:
            raise ParseError(f"bad number ({exc})", lineno, source) from None
        if len(pts[-1]) != len(pts[0]):
            raise ParseError("inconsistent vertex dimension", lineno, source)
    if not pts:
        raise ParseError("no vertices", None, source)
    return VPoly(np.array(pts))


def write_vpoly(path, v):
    with open(path, "w") as fh:
        fh.write(format_vpoly(v))


def read_vpoly(path):
    with open(path) as fh:
        return parse_vpoly(fh.read(), source=str(path))
