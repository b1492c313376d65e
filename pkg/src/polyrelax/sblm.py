"""Multi-neuron relaxations by splitting the input polytope, bounding and lifting.

A group of activation units shares one input polytope ``P`` over ``k``
pre-activation variables. ``P`` is split recursively by the bounding regions
of each unit into quadrants; on each quadrant every unit is enclosed between
two affine bounds. The quadrants are then lifted one output variable at a
time, and siblings are merged with :func:`polyrelax.pddm.convex_hull_approx`.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, StableNeuron
from .exact import enumerate_vertices
from .pddm import batch_intersect, convex_hull_approx
from .polytope import DEFAULT_TOL, HPoly, VPoly, dehomogenize, pdd_from_dd, unique_rows

SCURVE_GRID = 65


@dataclass(frozen=True)
class LinearBound:
    """Affine function ``coef @ x + const`` of a unit's inputs."""

    coef: np.ndarray
    const: float

    def __post_init__(self):
        object.__setattr__(self, "coef", np.atleast_1d(np.asarray(self.coef, dtype=np.float64)))
        object.__setattr__(self, "const", float(self.const))

    @property
    def slope(self):
        return float(self.coef[0])

    def __call__(self, x):
        """Value at ``x``; for univariate bounds ``x`` may be a scalar or a sample vector."""
        x = np.asarray(x, dtype=np.float64)
        if len(self.coef) == 1 and x.ndim <= 1:
            return self.coef[0] * x + self.const
        return x @ self.coef + self.const


@dataclass(frozen=True)
class LinearBoundPair:
    lower: LinearBound
    upper: LinearBound


@dataclass(frozen=True, eq=False)
class BoundingRegion:
    """Region ``{x | a @ x >= b}`` over a unit's inputs.

    Univariate regions also record the interval ``[lo, hi]`` (possibly
    infinite at either end).
    """

    a: np.ndarray
    b: np.ndarray
    lo: float = None
    hi: float = None

    @classmethod
    def interval(cls, lo, hi):
        if lo > hi:
            raise ValueError("empty interval")
        a, b = [], []
        if np.isfinite(lo):
            a.append([1.0])
            b.append(lo)
        if np.isfinite(hi):
            a.append([-1.0])
            b.append(-hi)
        return cls(np.array(a).reshape(-1, 1), np.array(b, dtype=np.float64), float(lo), float(hi))

    @classmethod
    def polyhedral(cls, a, b):
        return cls(np.atleast_2d(np.asarray(a, dtype=np.float64)), np.asarray(b, dtype=np.float64).reshape(-1))

    @property
    def is_interval(self):
        return self.lo is not None

    def contains(self, x, tol=DEFAULT_TOL.feas):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.a.shape[1] == 1 and x.shape[1] != 1:
            x = x.reshape(-1, 1)
        if len(self.b) == 0:
            return np.ones(len(x), dtype=bool)
        return np.all(x @ self.a.T - self.b >= -tol, axis=1)


@dataclass(frozen=True)
class Region:
    region: BoundingRegion
    bounds: LinearBoundPair


@dataclass(frozen=True, eq=False)
class ActivationSpec:
    """Bounding regions and affine bounds of one activation unit.

    Attributes
    ----------
    kind : str
        ``relu``, ``sigmoid``, ``tanh`` or ``maxpool``.
    regions : list of Region
        Regions covering the unit's input range, each with a bound pair.
    n_inputs : int
        Number of input variables of the unit (1 except for maxpool).
    inputs : tuple of int, optional
        Positions of the unit's inputs among the group's input variables.
        Defaults to the unit's own position for univariate units and to all
        variables for multivariate ones.
    """

    kind: str
    regions: list
    n_inputs: int = 1
    inputs: tuple = None
    split: float = None

    def with_inputs(self, inputs):
        return ActivationSpec(self.kind, self.regions, self.n_inputs, tuple(int(i) for i in inputs), self.split)

    def __call__(self, x):
        return activation(self.kind, x)


def activation(kind, x):
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return _sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "maxpool":
        return x.max(axis=-1)
    raise ValueError(f"unknown activation {kind!r}")


def _sigmoid(x):
    # avoids overflow warnings for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _dsigmoid(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _dtanh(x):
    t = np.tanh(x)
    return 1.0 - t * t


_SCURVES = {"sigmoid": (_sigmoid, _dsigmoid), "tanh": (np.tanh, _dtanh)}


def relu_spec(l, u):
    """Exact bounds ``y = 0`` on ``x <= 0`` and ``y = x`` on ``x >= 0``.

    Raises
    ------
    StableNeuron
        If ``[l, u]`` does not contain zero in its interior.
    """
    if l >= 0 or u <= 0:
        raise StableNeuron(f"ReLU input range [{l}, {u}] lies in one linear piece")
    zero = LinearBound([0.0], 0.0)
    ident = LinearBound([1.0], 0.0)
    return ActivationSpec(
        "relu",
        [
            Region(BoundingRegion.interval(-np.inf, 0.0), LinearBoundPair(zero, zero)),
            Region(BoundingRegion.interval(0.0, np.inf), LinearBoundPair(ident, ident)),
        ],
    )


def scurve_bounds(kind, l, u):
    """Lower and upper line of an S-shaped function on ``[l, u]``.

    The upper line passes through ``(u, f(u))`` and the lower one through
    ``(l, f(l))``. Each uses the chord where the function is convex (upper)
    or concave (lower) on the whole interval, else the smaller of the two end
    derivatives.
    """
    f, df = _SCURVES[kind]
    fl, fu = float(f(l)), float(f(u))
    if u <= l:
        c = LinearBound([0.0], fl)
        return LinearBoundPair(c, c)
    chord = (fu - fl) / (u - l)
    dmin = float(min(df(l), df(u)))
    up = chord if u <= 0 else dmin
    lo = chord if l >= 0 else dmin
    return LinearBoundPair(LinearBound([lo], fl - lo * l), LinearBound([up], fu - up * u))


def _gap_area(pair, l, u):
    """Area between the two lines of ``pair`` over ``[l, u]``."""
    if u <= l:
        return 0.0
    gap_l = pair.upper(np.float64(l)) - pair.lower(np.float64(l))
    gap_u = pair.upper(np.float64(u)) - pair.lower(np.float64(u))
    return 0.5 * (u - l) * (gap_l + gap_u)


def scurve_area(kind, l, u, c):
    """Area of the two-piece relaxation of an S-curve split at ``c``."""
    return _gap_area(scurve_bounds(kind, l, c), l, c) + _gap_area(scurve_bounds(kind, c, u), c, u)


def best_split(kind, l, u, n=SCURVE_GRID):
    """Grid point in ``[l, u]`` that minimizes :func:`scurve_area`."""
    if u <= l:
        return float(l)
    grid = np.linspace(l, u, n)
    areas = [scurve_area(kind, l, u, c) for c in grid]
    return float(grid[int(np.argmin(areas))])


def scurve_spec(kind, l, u, split=None):
    """Two-region relaxation of sigmoid or tanh on ``[l, u]``.

    The split point defaults to :func:`best_split`. If it falls on an end of
    the interval, or ``l == u``, a single region covering the line is used.
    """
    if kind not in _SCURVES:
        raise ValueError(f"not an S-curve activation: {kind!r}")
    l, u = float(l), float(u)
    if l > u:
        raise ValueError("lower bound exceeds upper bound")
    c = best_split(kind, l, u) if split is None else float(split)
    if c <= l or c >= u:
        region = BoundingRegion.interval(-np.inf, np.inf)
        return ActivationSpec(kind, [Region(region, scurve_bounds(kind, l, u))], split=c)
    return ActivationSpec(
        kind,
        [
            Region(BoundingRegion.interval(-np.inf, c), scurve_bounds(kind, l, c)),
            Region(BoundingRegion.interval(c, np.inf), scurve_bounds(kind, c, u)),
        ],
        split=c,
    )


def maxpool_spec(d, box):
    """Regions ``{x_i >= x_j for all j}`` with exact bounds ``y = x_i``.

    Regions that cannot contain a point of the box (``u_i < max_j l_j``) are
    dropped.
    """
    if d < 2:
        raise ValueError("maxpool needs at least two inputs")
    box = np.asarray(box, dtype=np.float64).reshape(d, 2)
    top = box[:, 0].max()
    regions = []
    for i in range(d):
        if box[i, 1] < top:
            continue
        others = [j for j in range(d) if j != i]
        a = np.zeros((d - 1, d))
        a[np.arange(d - 1), i] = 1.0
        a[np.arange(d - 1), others] = -1.0
        e = LinearBound(np.eye(d)[i], 0.0)
        regions.append(Region(BoundingRegion.polyhedral(a, np.zeros(d - 1)), LinearBoundPair(e, e)))
    return ActivationSpec("maxpool", regions, n_inputs=d)


# --------------------------------------------------------------------------
# splitting and lifting


@dataclass
class SblmStats:
    """Instrumentation of one call: dimension of every hull and the quadrant count."""

    hull_dims: list = field(default_factory=list)
    quadrants: int = 0
    empty_quadrants: int = 0


def _unit_inputs(specs):
    out = []
    for i, s in enumerate(specs):
        if s.inputs is not None:
            out.append(tuple(s.inputs))
        elif s.n_inputs == 1:
            out.append((i,))
        else:
            out.append(tuple(range(s.n_inputs)))
    return out


def _embed(rows, cols, width):
    out = np.zeros((len(rows), width))
    out[:, list(cols)] = rows
    return out


def _split(h, v, region, cols):
    """Exact DD of ``(h, v)`` intersected with a bounding region."""
    k = h.dim
    if len(region.b) == 0:
        return h, v
    added = np.hstack([-region.b[:, None], _embed(region.a, cols, k)])
    child = batch_intersect(pdd_from_dd(h, v), added)
    hc, vc = dehomogenize(child)
    return hc.deduplicated(), vc


def _lift(h, v, bounds):
    """Append an output coordinate ``y`` with ``lower(x) <= y <= upper(x)``.

    ``bounds`` act on all current coordinates of ``(h, v)``.
    """
    lo, up = bounds.lower.coef, bounds.upper.coef
    a = np.vstack([
        np.hstack([h.a, np.zeros((h.m, 1))]),
        np.append(-lo, 1.0),
        np.append(up, -1.0),
    ])
    b = np.concatenate([h.b, [bounds.lower.const, -bounds.upper.const]])
    V = v.vertices
    ylo = V @ lo + bounds.lower.const
    yup = V @ up + bounds.upper.const
    W = np.vstack([np.hstack([V, ylo[:, None]]), np.hstack([V, yup[:, None]])])
    W = W[unique_rows(W, 12)]
    return HPoly(a, b, h.tol).deduplicated(), VPoly(W)


def sblm(ordering, p, specs, stats=None, remove_redundant=False, pairs=None):
    """Constraints jointly bounding the inputs and outputs of a group of units.

    Parameters
    ----------
    ordering : sequence of int or None
        Order in which units split the input polytope (the first splits at
        the root). ``None`` means ascending unit index.
    p : HPoly
        Bounded input polytope over the group's ``k`` input variables.
    specs : list of ActivationSpec
        One per unit.
    stats : SblmStats, optional
        Filled with instrumentation.
    remove_redundant : bool
        Passed to every hull call.
    pairs : str, optional
        Ray pairing of the hull calls, see :func:`polyrelax.pddm.batch_intersect`.
        ``None`` picks ``"faces"`` for groups of at most two inputs, where it
        makes the result exact, and the cheaper ``"all"`` otherwise.

    Returns
    -------
    HPoly
        Over the variables ``[x_1..x_k, y_1..y_n]`` with ``n = len(specs)``.

    Raises
    ------
    EmptyInput
        If ``p`` is empty.
    """
    k = p.dim
    n = len(specs)
    order = list(range(n)) if ordering is None else [int(i) for i in ordering]
    if sorted(order) != list(range(n)):
        raise ValueError("ordering must be a permutation of the units")
    cols = _unit_inputs(specs)
    for c in cols:
        if max(c) >= k:
            raise ValueError("unit input index outside the input polytope")
    stats = SblmStats() if stats is None else stats
    if pairs is None:
        pairs = "faces" if k <= 2 else "all"
    V = enumerate_vertices(p)
    if len(V) == 0:
        raise EmptyInput("input polytope is empty")
    root = (p.deduplicated(), VPoly(V))

    def build(node, depth):
        # returns (HPoly, VPoly) over x plus the outputs of order[depth:], appended
        # in reverse order, or None for an empty subtree
        if depth == n:
            stats.quadrants += 1
            return node
        unit = order[depth]
        spec = specs[unit]
        lifted = []
        for reg in spec.regions:
            h, v = _split(node[0], node[1], reg.region, cols[unit])
            if v.n == 0:
                stats.empty_quadrants += 1
                continue
            sub = build((h, v), depth + 1)
            if sub is None:
                continue
            # the child already carries the outputs of deeper units after x
            lifted.append(_lift(sub[0], sub[1], _pad_bounds(reg.bounds, sub[0].dim, cols[unit])))
        if not lifted:
            return None
        acc = lifted[0]
        for other in lifted[1:]:
            s = {}
            acc = convex_hull_approx(acc, other, remove_redundant=remove_redundant, stats=s, pairs=pairs)
            stats.hull_dims.append(s["dim"])
        return acc

    out = build(root, 0)
    if out is None:
        raise EmptyInput("every quadrant is empty")
    h = out[0]
    # columns are [x, y_order[-1], ..., y_order[0]]
    perm = list(range(k)) + [None] * n
    for pos, unit in enumerate(reversed(order)):
        perm[k + unit] = k + pos
    return HPoly(h.a[:, perm], h.b, h.tol)


def _pad_bounds(bounds, width, cols):
    """Bound pair acting on the unit's input columns of a ``width``-wide point."""
    lo = _embed(bounds.lower.coef[None, :], cols, width)[0]
    up = _embed(bounds.upper.coef[None, :], cols, width)[0]
    return LinearBoundPair(LinearBound(lo, bounds.lower.const), LinearBound(up, bounds.upper.const))


def sample_graph(p, specs, n, rng, oversample=4):
    """Random points ``(x, f(x))`` with ``x`` uniform in ``p`` (by rejection from its box).

    Intended for soundness checks. Returns an ``(m, k + len(specs))`` array
    with ``m <= n``.
    """
    V = enumerate_vertices(p)
    lo, hi = V.min(axis=0), V.max(axis=0)
    cols = _unit_inputs(specs)
    out = []
    need = n
    for _ in range(50):
        x = rng.uniform(lo, hi, size=(oversample * need, p.dim))
        x = x[p.contains(x)]
        out.append(x[:need])
        need -= len(out[-1])
        if need <= 0:
            break
    x = np.vstack(out)
    ys = [activation(s.kind, x[:, list(c)] if s.n_inputs > 1 else x[:, c[0]]) for s, c in zip(specs, cols)]
    return np.hstack([x, np.column_stack(ys)]) if ys else x
