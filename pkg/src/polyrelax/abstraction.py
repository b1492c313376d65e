"""Single-neuron bound analysis and the multi-neuron constraint generation around it.

Bounds come from back-substitution: every neuron gets symbolic affine lower
and upper bounds in terms of the previous layer, and expressions are pushed
backwards through these relaxations to the input box before concretizing.
"""
import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import PolyrelaxError, UnsupportedLayer
from .network import Activation, Affine
from .polytope import HPoly
from .sblm import (
    activation,
    best_split,
    maxpool_spec,
    relu_spec,
    sblm,
    scurve_area,
    scurve_bounds,
    scurve_spec,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Relaxation:
    """Affine bounds ``L @ x + lc <= y <= U @ x + uc`` of an activation layer."""

    L: np.ndarray
    lc: np.ndarray
    U: np.ndarray
    uc: np.ndarray


@dataclass(eq=False)
class Analysis:
    """Result of :func:`analyze_bounds`.

    ``lower[i]``, ``upper[i]`` bound the output of ``net.layers[i - 1]``
    (index 0 is the input box). ``relax[i]`` is the relaxation of layer
    ``i - 1`` when it is an activation layer.
    """

    net: object
    lower: list
    upper: list
    relax: dict = field(default_factory=dict)

    @property
    def input_box(self):
        return self.lower[0], self.upper[0]

    def pre_activation(self, layer):
        """Bounds of the input of ``net.layers[layer]``."""
        return self.lower[layer], self.upper[layer]

    def symbolic(self, layer):
        """Symbolic bounds of the activation layer ``net.layers[layer]`` in terms of its input."""
        return self.relax[layer + 1]


def relu_relaxation(l, u):
    """Triangle upper line and the area-minimizing lower line ``lam * x``."""
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    n = len(l)
    Ls, lc, Us, uc = np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n)
    active = l >= 0
    Ls[active] = Us[active] = 1.0
    cross = (l < 0) & (u > 0)
    s = u[cross] / (u[cross] - l[cross])
    Us[cross] = s
    uc[cross] = -s * l[cross]
    Ls[cross] = (u[cross] >= -l[cross]).astype(float)
    return Relaxation(np.diag(Ls), lc, np.diag(Us), uc)


def scurve_relaxation(kind, l, u):
    n = len(l)
    Ls, lc, Us, uc = np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n)
    for i in range(n):
        pair = scurve_bounds(kind, float(l[i]), float(u[i]))
        Ls[i], lc[i] = pair.lower.slope, pair.lower.const
        Us[i], uc[i] = pair.upper.slope, pair.upper.const
    return Relaxation(np.diag(Ls), lc, np.diag(Us), uc)


def maxpool_relaxation(windows, l, u, n_in):
    """``y >= x_i`` for the input with the largest lower bound; upper exact if it dominates."""
    m = len(windows)
    L, U = np.zeros((m, n_in)), np.zeros((m, n_in))
    lc, uc = np.zeros(m), np.zeros(m)
    for r, w in enumerate(windows):
        w = list(w)
        best = w[int(np.argmax(l[w]))]
        L[r, best] = 1.0
        others = [j for j in w if j != best]
        if not others or l[best] >= max(u[j] for j in others):
            U[r, best] = 1.0
        else:
            uc[r] = max(u[j] for j in w)
    return Relaxation(L, lc, U, uc)


def _relax_layer(layer, l, u):
    if layer.kind == "relu":
        return relu_relaxation(l, u)
    if layer.kind in ("sigmoid", "tanh"):
        return scurve_relaxation(layer.kind, l, u)
    if layer.kind == "maxpool":
        return maxpool_relaxation(layer.windows, l, u, len(l))
    raise UnsupportedLayer(layer.kind)


def backsubstitute(analysis, layer, C, d=None):
    """Lower bounds of ``C @ v + d`` where ``v`` is the output of ``net.layers[layer - 1]``.

    ``layer`` indexes ``analysis.lower``: ``0`` is the input itself.
    """
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    const = np.zeros(len(C)) if d is None else np.asarray(d, dtype=np.float64).copy()
    net = analysis.net
    for i in range(layer, 0, -1):
        lay = net.layers[i - 1]
        if isinstance(lay, Affine):
            const = const + C @ lay.bias
            C = C @ lay.weights
        else:
            r = analysis.relax[i]
            Cp, Cn = np.maximum(C, 0.0), np.minimum(C, 0.0)
            const = const + Cp @ r.lc + Cn @ r.uc
            C = Cp @ r.L + Cn @ r.U
    lo, hi = analysis.lower[0], analysis.upper[0]
    return const + np.maximum(C, 0.0) @ lo + np.minimum(C, 0.0) @ hi


def analyze_bounds(net, input_box, overrides=None):
    """Bounds of every layer over an input box by back-substitution.

    Parameters
    ----------
    net : Network
    input_box : (lo, hi) arrays
    overrides : dict, optional
        ``{layer_index: (lo, hi)}`` with bounds known from elsewhere (for
        example LP refinement), intersected with the computed ones. Indices
        follow :class:`Analysis`.

    Returns
    -------
    Analysis
    """
    lo = np.asarray(input_box[0], dtype=np.float64).reshape(-1)
    hi = np.asarray(input_box[1], dtype=np.float64).reshape(-1)
    if lo.shape != (net.input_dim,) or hi.shape != (net.input_dim,):
        raise ValueError("input box does not match the network input")
    if np.any(lo > hi):
        raise ValueError("input box has lower > upper")
    overrides = overrides or {}
    an = Analysis(net, [lo], [hi])
    for i, layer in enumerate(net.layers, 1):
        if isinstance(layer, Affine):
            n = layer.out_dim
            eye = np.eye(n)
            l = backsubstitute(an, i, eye)
            u = -backsubstitute(an, i, -eye)
            # back-substitution alone can be looser than the interval image
            W, pl, pu = layer.weights, an.lower[i - 1], an.upper[i - 1]
            c, r = W @ (0.5 * (pl + pu)) + layer.bias, np.abs(W) @ (0.5 * (pu - pl))
            l, u = np.maximum(l, c - r), np.minimum(u, c + r)
        elif isinstance(layer, Activation):
            pl, pu = an.lower[i - 1], an.upper[i - 1]
            r = _relax_layer(layer, pl, pu)
            an.relax[i] = r
            l = backsubstitute(an, i, np.eye(len(r.lc)))
            u = -backsubstitute(an, i, -np.eye(len(r.lc)))
            # the concrete activation range is never worse than the interval image
            il, iu = _interval_image(layer, pl, pu)
            l, u = np.maximum(l, il), np.minimum(u, iu)
        else:
            raise UnsupportedLayer(type(layer).__name__)
        if i in overrides:
            ol, ou = overrides[i]
            l, u = np.maximum(l, ol), np.minimum(u, ou)
        u = np.maximum(u, l)  # guard against crossing by rounding
        an.lower.append(l)
        an.upper.append(u)
    return an


def _interval_image(layer, l, u):
    if layer.kind == "relu":
        return np.maximum(l, 0.0), np.maximum(u, 0.0)
    if layer.kind == "sigmoid":
        return activation("sigmoid", l), activation("sigmoid", u)
    if layer.kind == "tanh":
        return np.tanh(l), np.tanh(u)
    w = layer.windows
    return np.array([l[list(x)].max() for x in w]), np.array([u[list(x)].max() for x in w])


def interval_bounds(net, input_box):
    """Plain interval propagation; looser than :func:`analyze_bounds`."""
    l, u = (np.asarray(b, dtype=np.float64) for b in input_box)
    out = [(l, u)]
    for layer in net.layers:
        if isinstance(layer, Affine):
            W = layer.weights
            c = W @ (0.5 * (l + u)) + layer.bias
            r = np.abs(W) @ (0.5 * (u - l))
            l, u = c - r, c + r
        else:
            l, u = _interval_image(layer, l, u)
        out.append((l, u))
    return out


def output_margins(analysis, label):
    """Lower bounds of ``h_label - h_i`` for every class ``i`` (``+inf`` at ``label``)."""
    n = analysis.net.output_dim
    C = np.zeros((n, n))
    C[:, label] = 1.0
    C[np.arange(n), np.arange(n)] -= 1.0
    m = backsubstitute(analysis, len(analysis.net.layers), C)
    m[label] = np.inf
    return m


# --------------------------------------------------------------------------
# grouping


def sign_directions(k):
    """All nonzero vectors in ``{-1, 0, 1}^k`` (``3^k - 1`` rows)."""
    return np.array([c for c in itertools.product((-1.0, 0.0, 1.0), repeat=k) if any(c)])


def octahedral_projection(group, analysis, layer):
    """Octahedral over-approximation of the inputs of neurons ``group`` of ``net.layers[layer]``.

    Each direction ``c`` in ``{-1, 0, 1}^k`` gets the lower bound of
    ``c @ x`` from back-substitution. Unit directions are also intersected
    with the analysis bounds, which may have been refined.
    """
    group = list(group)
    k = len(group)
    C = sign_directions(k)
    n = len(analysis.lower[layer])
    full = np.zeros((len(C), n))
    full[:, group] = C
    b = backsubstitute(analysis, layer, full)
    l, u = analysis.lower[layer][group], analysis.upper[layer][group]
    for r, c in enumerate(C):
        nz = np.flatnonzero(c)
        if len(nz) == 1:
            j = nz[0]
            b[r] = max(b[r], l[j] if c[j] > 0 else -u[j])
    keep = np.isfinite(b)
    return HPoly(C[keep], b[keep])


def neuron_area(kind, l, u):
    """Area of the single-neuron relaxation in the input-output plane."""
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if kind == "relu":
        return np.where((l < 0) & (u > 0), 0.5 * u * (-l), 0.0)
    return np.array([scurve_area(kind, a, b, best_split(kind, a, b)) for a, b in zip(l, u)])


def partition_layer(l, u, kind, n_s):
    """Split the neurons needing a relaxation into sets of at most ``n_s``.

    Neurons are ordered by decreasing single-neuron relaxation area, ties
    broken by index. Stable ReLUs are left out; for S-curves only neurons
    with ``l == u`` are.
    """
    if n_s < 1:
        raise ValueError("n_s must be positive")
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if kind == "relu":
        cand = np.flatnonzero((l < 0) & (u > 0))
    else:
        cand = np.flatnonzero(u > l)
    area = neuron_area(kind, l[cand], u[cand])
    order = cand[np.lexsort((cand, -area))]
    return [sorted(order[i:i + n_s].tolist()) for i in range(0, len(order), n_s)]


def select_groups(indices, k, s, max_groups=None):
    """Greedy choice of ``k``-subsets with pairwise overlap at most ``s``.

    Subsets are visited in lexicographic order of the sorted indices and
    accepted if they share at most ``s`` elements with every accepted
    subset, until ``max_groups`` are accepted. Neurons left uncovered then
    get one extra group each, grown from the neuron in index order while the
    overlap bound holds; these may have fewer than ``k`` elements.
    """
    idx = sorted(int(i) for i in indices)
    if len(idx) < k:
        return [tuple(idx)] if len(idx) >= 2 else []
    if not 0 <= s < k:
        raise ValueError("overlap must satisfy 0 <= s < k")
    groups = []
    used = set()  # (s+1)-subsets contained in an accepted group

    def fits(g):
        return not any(sub in used for sub in itertools.combinations(g, s + 1))

    def accept(g):
        groups.append(tuple(g))
        used.update(itertools.combinations(g, s + 1))

    for g in itertools.combinations(idx, k):
        if max_groups is not None and len(groups) >= max_groups:
            break
        if fits(g):
            accept(g)
    covered = set(itertools.chain.from_iterable(groups))
    for n in idx:
        if n in covered:
            continue
        g = [n]
        for m in idx:
            if len(g) == k:
                break
            if m == n:
                continue
            cand = sorted(g + [m])
            if len(cand) <= s or fits(tuple(cand)):
                g = cand
        if len(g) >= 2:
            accept(sorted(g))
            covered.update(g)
    return groups


@dataclass(frozen=True)
class GroupingConfig:
    """Group size ``k``, partition size ``n_s`` and maximal pairwise overlap ``s``."""

    k: int = 3
    n_s: int = 100
    s: int = 1
    max_groups_factor: int = 2

    def __post_init__(self):
        if not (1 <= self.s < self.k <= self.n_s):
            raise ValueError("grouping needs 1 <= s < k <= n_s")

    @classmethod
    def for_activation(cls, kind, **kw):
        """Defaults per activation; MaxPool groups are single windows and ignore these."""
        return cls(**kw)

    @property
    def max_groups(self):
        return self.max_groups_factor * self.n_s


@dataclass(frozen=True, eq=False)
class NeuronGroup:
    """Inputs ``indices`` of activation layer ``layer`` and their octahedral bounds.

    ``outputs`` are the layer outputs the group constrains: the same indices
    for elementwise activations, the window index for maxpool.
    """

    layer: int
    indices: tuple
    octahedron: HPoly
    outputs: tuple = None

    def __post_init__(self):
        if self.outputs is None:
            object.__setattr__(self, "outputs", tuple(self.indices))


def unit_specs(layer, group, l, u):
    """Activation specs of the neurons (or maxpool windows) in ``group``."""
    if layer.kind == "relu":
        return [relu_spec(l[i], u[i]) for i in group]
    if layer.kind in ("sigmoid", "tanh"):
        return [scurve_spec(layer.kind, l[i], u[i]) for i in group]
    raise UnsupportedLayer(layer.kind)


def build_groups(analysis, layer, config):
    """Octahedral input groups for activation layer ``net.layers[layer]``."""
    act = analysis.net.layers[layer]
    l, u = analysis.pre_activation(layer)
    if act.kind == "maxpool":
        out = []
        for r, w in enumerate(act.windows):
            w = sorted(set(w))
            if 2 <= len(w) <= 4:
                out.append(NeuronGroup(layer, tuple(w), octahedral_projection(w, analysis, layer), (r,)))
        return out
    groups = []
    for part in partition_layer(l, u, act.kind, config.n_s):
        for g in select_groups(part, config.k, config.s, config.max_groups):
            groups.append(NeuronGroup(layer, tuple(g), octahedral_projection(g, analysis, layer)))
    return groups


def layer_constraints(analysis, groups, stats=None):
    """Multi-neuron constraints of every group.

    Returns a list of ``(group, HPoly)``, the polytope over the group's
    inputs followed by its outputs. A group whose computation fails is
    logged and skipped.
    """
    out = []
    for g in groups:
        act = analysis.net.layers[g.layer]
        l, u = analysis.pre_activation(g.layer)
        t0 = time.perf_counter()
        try:
            if act.kind == "maxpool":
                box = np.column_stack([l[list(g.indices)], u[list(g.indices)]])
                specs = [maxpool_spec(len(g.indices), box)]
            else:
                specs = unit_specs(act, g.indices, l, u)
            K = sblm(None, g.octahedron, specs)
        except (PolyrelaxError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("group %s of layer %d dropped: %s", g.indices, g.layer, exc)
            continue
        log.debug("group %s: %d rows in %.3fs", g.indices, K.m, time.perf_counter() - t0)
        if stats is not None:
            stats.append((g.indices, K.m, time.perf_counter() - t0))
        out.append((g, K))
    return out
