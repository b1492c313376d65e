"""LP encoding of a network and the certification cascade built on it.

The cascade for a classification property tries, in order:

1. the clean input (a misclassified input is its own counterexample),
2. back-substitution margins,
3. one LP per open adversary class with single- and multi-neuron
   constraints; the input part of each LP optimum is evaluated concretely
   and refined by a short projected gradient search,
4. optionally, LP-tightened neuron bounds and a second round of LPs.
"""
import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import lp as lpmod
from .abstraction import (
    GroupingConfig,
    NeuronGroup,
    analyze_bounds,
    build_groups,
    layer_constraints,
    output_margins,
    sign_directions,
)
from .errors import PolyrelaxError, ShapeError
from .network import Affine, Property, evaluate, layer_outputs
from .polytope import HPoly
from .sblm import activation, scurve_bounds

log = logging.getLogger(__name__)

# LP optima are trusted only up to this absolute error
LP_SAFETY = 1e-7
# outward rounding of reported output ranges, relative to magnitude
RANGE_PAD = 1e-10
TIMING_KEYS = ("bounds", "octahedra", "multi_neuron", "lp")


@dataclass(frozen=True)
class EncodingOptions:
    """What goes into the LP and which refinement stages run."""

    use_multi_neuron: bool = True
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    refine_neuron_bounds: bool = False
    refine_octahedron: bool = False
    lp_time_limit: float = 60.0
    lp_backend: str = None
    attack_steps: int = 50
    jobs: int = 1

    def __post_init__(self):
        if self.lp_time_limit <= 0:
            raise ValueError("time limits must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")


@dataclass
class CertResult:
    verdict: str
    margins: np.ndarray
    counterexample: np.ndarray = None
    stage: str = ""
    timings: dict = field(default_factory=lambda: dict.fromkeys(TIMING_KEYS, 0.0))
    label: int = None
    messages: list = field(default_factory=list)

    @property
    def min_margin(self):
        m = self.margins[np.isfinite(self.margins)]
        return float(m.min()) if len(m) else np.inf


@dataclass
class Encoding:
    """An LP model and the variable indices of every layer (index 0 is the input)."""

    model: lpmod.LpModel
    vars: list
    groups: list = field(default_factory=list)

    def layer_vars(self, i):
        return self.vars[i]


def _timer(timings, key):
    class _T:
        def __enter__(self):
            self.t = time.perf_counter()

        def __exit__(self, *exc):
            if timings is not None:
                timings[key] = timings.get(key, 0.0) + time.perf_counter() - self.t

    return _T()


def _refined_octahedra(enc, groups, options):
    """Tighten every octahedron direction by an LP over the encoding built so far."""
    out = []
    for g in groups:
        cols = enc.vars[g.layer][list(g.indices)]
        C = sign_directions(len(g.indices))
        old = dict(zip(map(tuple, g.octahedron.a), g.octahedron.b))
        b = np.empty(len(C))
        for r, c in enumerate(C):
            m = enc.model.copy()
            m.set_objective({int(j): float(v) for j, v in zip(cols, c) if v})
            res = lpmod.solve(m, options.lp_time_limit, options.lp_backend)
            lp_b = res.objective - LP_SAFETY if res.optimal else -np.inf
            b[r] = max(lp_b, old.get(tuple(c), -np.inf))
        keep = np.isfinite(b)
        out.append(NeuronGroup(g.layer, g.indices, HPoly(C[keep], b[keep]), g.outputs))
    return out


def _encode_activation(model, layer, xin, xout, l, u):
    if layer.kind == "relu":
        for j in range(len(xin)):
            xi, yi = int(xin[j]), int(xout[j])
            if u[j] <= 0:
                model.add_constraint({yi: 1.0}, "=", 0.0)
            elif l[j] >= 0:
                model.add_constraint({yi: 1.0, xi: -1.0}, "=", 0.0)
            else:
                s = u[j] / (u[j] - l[j])
                model.add_constraint({yi: 1.0}, ">=", 0.0)
                model.add_constraint({yi: 1.0, xi: -1.0}, ">=", 0.0)
                model.add_constraint({yi: 1.0, xi: -s}, "<=", -s * l[j])
    elif layer.kind in ("sigmoid", "tanh"):
        for j in range(len(xin)):
            xi, yi = int(xin[j]), int(xout[j])
            if l[j] == u[j]:
                model.add_constraint({yi: 1.0}, "=", float(activation(layer.kind, l[j])))
                continue
            pair = scurve_bounds(layer.kind, l[j], u[j])
            model.add_constraint({yi: 1.0, xi: -pair.lower.slope}, ">=", pair.lower.const)
            model.add_constraint({yi: 1.0, xi: -pair.upper.slope}, "<=", pair.upper.const)
    elif layer.kind == "maxpool":
        for r, w in enumerate(layer.windows):
            yi = int(xout[r])
            w = list(w)
            best = w[int(np.argmax(l[w]))]
            if all(l[best] >= u[j] for j in w if j != best):
                model.add_constraint({yi: 1.0, int(xin[best]): -1.0}, "=", 0.0)
                continue
            for j in w:
                model.add_constraint({yi: 1.0, int(xin[j]): -1.0}, ">=", 0.0)
            model.add_constraint({yi: 1.0}, "<=", float(max(u[j] for j in w)))
    else:
        raise ShapeError(f"cannot encode layer kind {layer.kind!r}")


def encode(net, input_box, analysis, options=None, timings=None, upto=None):
    """Build the LP encoding of ``net`` over ``input_box``.

    Parameters
    ----------
    analysis : Analysis
        Bounds from :func:`analyze_bounds` for the same box; they become
        variable bounds and parametrize the relaxations.
    upto : int, optional
        Stop after the variables of analysis index ``upto`` (a prefix
        encoding).

    Returns
    -------
    Encoding
    """
    options = options or EncodingOptions()
    L = len(net.layers) if upto is None else int(upto)
    if len(analysis.lower) != len(net.layers) + 1:
        raise ShapeError("analysis does not match the network")
    lo, hi = (np.asarray(b, dtype=np.float64) for b in input_box)
    if lo.shape != (net.input_dim,):
        raise ShapeError("input box does not match the network")
    model = lpmod.LpModel()
    vars_ = [model.add_vars(net.input_dim, "in", analysis.lower[0], analysis.upper[0])]
    enc = Encoding(model, vars_)
    for i in range(1, L + 1):
        layer = net.layers[i - 1]
        l, u = analysis.lower[i], analysis.upper[i]
        cur = model.add_vars(len(l), f"v{i}_", l, u)
        prev = vars_[i - 1]
        if isinstance(layer, Affine):
            W = layer.weights
            for r in range(W.shape[0]):
                nz = np.flatnonzero(W[r])
                coefs = {int(prev[j]): -float(W[r, j]) for j in nz}
                coefs[int(cur[r])] = 1.0
                model.add_constraint(coefs, "=", float(layer.bias[r]))
        else:
            pl, pu = analysis.lower[i - 1], analysis.upper[i - 1]
            _encode_activation(model, layer, prev, cur, pl, pu)
            if options.use_multi_neuron:
                j = i - 1
                with _timer(timings, "octahedra"):
                    groups = build_groups(analysis, j, options.grouping)
                    if options.refine_octahedron and groups:
                        groups = _refined_octahedra(enc, groups, options)
                with _timer(timings, "multi_neuron"):
                    cons = layer_constraints(analysis, groups)
                for g, K in cons:
                    cols = np.concatenate([prev[list(g.indices)], cur[list(g.outputs)]])
                    if K.dim != len(cols):
                        raise ShapeError("group constraint width does not match its variables")
                    model.add_rows(K.a, ">=", K.b, cols)
                    enc.groups.append((g, K))
        vars_.append(cur)
    return enc


def _margin_objective(enc, label, other):
    out = enc.vars[-1]
    return {int(out[label]): 1.0, int(out[other]): -1.0}


def _solve_margin(enc, label, other, options):
    m = enc.model.copy()
    m.set_objective(_margin_objective(enc, label, other))
    return lpmod.solve(m, options.lp_time_limit, options.lp_backend)


def _grad_outputs(net, x, w):
    """Gradient of ``w @ h(x)`` with respect to ``x`` (a subgradient at kinks)."""
    acts = layer_outputs(net, x)
    g = np.asarray(w, dtype=np.float64)
    for i in range(len(net.layers), 0, -1):
        layer = net.layers[i - 1]
        pre = acts[i - 1]
        if isinstance(layer, Affine):
            g = layer.weights.T @ g
        elif layer.kind == "relu":
            g = g * (pre > 0)
        elif layer.kind == "sigmoid":
            s = acts[i]
            g = g * s * (1 - s)
        elif layer.kind == "tanh":
            g = g * (1 - acts[i] ** 2)
        else:
            gi = np.zeros(len(pre))
            for r, win in enumerate(layer.windows):
                win = list(win)
                gi[win[int(np.argmax(pre[win]))]] += g[r]
            g = gi
    return g


def violates(net, x, label):
    """Whether ``x`` breaks robustness: some class scores at least as high as ``label``."""
    h = evaluate(net, x)
    others = np.delete(h, label)
    return bool(len(others) and others.max() >= h[label])


def attack(net, x0, box, label, other, steps=50):
    """Projected sign-gradient descent on ``h_label - h_other`` started at ``x0``.

    Returns the best point found.
    """
    lo, hi = box
    x = np.clip(np.asarray(x0, dtype=np.float64), lo, hi)
    w = np.zeros(net.output_dim)
    w[label], w[other] = 1.0, -1.0
    best, best_val = x, float(w @ evaluate(net, x))
    step = 0.25 * np.max(hi - lo) if np.any(hi > lo) else 0.0
    for _ in range(steps):
        if step <= 0:
            break
        g = _grad_outputs(net, x, w)
        y = np.clip(x - step * np.sign(g), lo, hi)
        val = float(w @ evaluate(net, y))
        if val < best_val:
            best, best_val, x = y, val, y
        else:
            step *= 0.5
    return best


def _open_classes(margins):
    return [i for i, m in enumerate(margins) if m <= 0]


def _lp_round(net, enc, box, label, margins, options, timings, result):
    """Solve the margin LPs of all open classes; returns a counterexample if one is found."""
    open_ = _open_classes(margins)
    t0 = time.perf_counter()
    if options.jobs > 1 and len(open_) > 1:
        with ThreadPoolExecutor(options.jobs) as pool:
            outs = list(pool.map(lambda c: _solve_margin(enc, label, c, options), open_))
    else:
        outs = [_solve_margin(enc, label, c, options) for c in open_]
    timings["lp"] += time.perf_counter() - t0
    for c, res in zip(open_, outs):
        if not res.optimal:
            result.messages.append(f"class {c}: LP {res.status}")
            continue
        margins[c] = max(margins[c], res.objective - LP_SAFETY)
        if margins[c] > 0:
            continue
        xin = res.x[enc.vars[0]]
        for cand in (xin, attack(net, xin, box, label, c, options.attack_steps)):
            if violates(net, cand, label):
                return cand
    return None


def refine_neuron_bounds(net, input_box, analysis, options=None, timings=None):
    """Tighten pre-activation bounds of layers after the first by LP.

    Each activation layer's inputs get one LP per direction over the
    encoding of the prefix. New bounds are intersected with the old ones,
    the analysis is re-run downstream, and the next layer is refined on top.

    Returns
    -------
    Analysis
    """
    options = options or EncodingOptions()
    timings = timings if timings is not None else dict.fromkeys(TIMING_KEYS, 0.0)
    overrides = {}
    act_inputs = [j for j, layer in enumerate(net.layers) if not isinstance(layer, Affine) and j >= 2]
    for j in act_inputs:
        enc = encode(net, input_box, analysis, options, timings, upto=j)
        l, u = analysis.lower[j].copy(), analysis.upper[j].copy()
        kind = net.layers[j].kind
        todo = np.flatnonzero((l < 0) & (u > 0)) if kind == "relu" else np.flatnonzero(u > l)
        t0 = time.perf_counter()
        for n in todo:
            v = int(enc.vars[j][n])
            for sense in ("min", "max"):
                m = enc.model.copy()
                m.set_objective({v: 1.0}, sense)
                res = lpmod.solve(m, options.lp_time_limit, options.lp_backend)
                if not res.optimal:
                    continue  # keep the old bound
                if sense == "min":
                    l[n] = max(l[n], res.objective - LP_SAFETY)
                else:
                    u[n] = min(u[n], res.objective + LP_SAFETY)
        timings["lp"] += time.perf_counter() - t0
        u = np.maximum(u, l)
        overrides[j] = (l, u)
        t0 = time.perf_counter()
        analysis = analyze_bounds(net, input_box, overrides)
        timings["bounds"] += time.perf_counter() - t0
    return analysis


def certify(net, sample, prop, options=None):
    """Decide local robustness of ``net`` around ``sample`` for ``prop``.

    Returns a :class:`CertResult` whose verdict is ``verified``,
    ``falsified`` (with a concrete counterexample) or ``unknown``.
    """
    options = options or EncodingOptions()
    x = np.asarray(sample.x, dtype=np.float64)
    label = int(sample.label)
    n_out = net.output_dim
    res = CertResult("unknown", np.full(n_out, -np.inf), label=label)
    res.margins[label] = np.inf
    t_start = time.perf_counter()
    try:
        if x.shape != (net.input_dim,):
            raise ShapeError("sample does not match the network input")
        if violates(net, x, label):
            res.verdict, res.counterexample, res.stage = "falsified", x, "clean"
            return res
        box = prop.input_box(x)
        t0 = time.perf_counter()
        an = analyze_bounds(net, box)
        res.margins = np.maximum(res.margins, output_margins(an, label))
        res.timings["bounds"] += time.perf_counter() - t0
        res.stage = "bounds"
        if not _open_classes(res.margins):
            res.verdict = "verified"
            return res
        stages = [("lp", False)]
        if options.refine_neuron_bounds:
            stages.append(("refine", True))
        for name, refine in stages:
            res.stage = name
            if refine:
                an = refine_neuron_bounds(net, box, an, options, res.timings)
                t0 = time.perf_counter()
                res.margins = np.maximum(res.margins, output_margins(an, label))
                res.timings["bounds"] += time.perf_counter() - t0
                if not _open_classes(res.margins):
                    res.verdict = "verified"
                    return res
            enc = encode(net, box, an, options, res.timings)
            cex = _lp_round(net, enc, box, label, res.margins, options, res.timings, res)
            if cex is not None:
                res.verdict, res.counterexample = "falsified", cex
                return res
            if not _open_classes(res.margins):
                res.verdict = "verified"
                return res
    except (PolyrelaxError, ValueError, np.linalg.LinAlgError) as exc:
        res.verdict = "unknown"
        res.messages.append(f"{type(exc).__name__}: {exc}")
    finally:
        res.timings["total"] = time.perf_counter() - t_start
    return res


def bound_output_range(net, x, epsilon, index, options=None, clip=None):
    """Sound lower and upper bounds of output ``index`` over the ``l_inf`` ball around ``x``."""
    options = options or EncodingOptions()
    prop = Property(epsilon, "output-range", clip)
    box = prop.input_box(np.asarray(x, dtype=np.float64))
    an = analyze_bounds(net, box)
    if options.refine_neuron_bounds:
        an = refine_neuron_bounds(net, box, an, options)
    lo, hi = float(an.lower[-1][index]), float(an.upper[-1][index])
    if hi > lo:
        enc = encode(net, box, an, options)
        v = int(enc.vars[-1][index])
        for sense in ("min", "max"):
            m = enc.model.copy()
            m.set_objective({v: 1.0}, sense)
            out = lpmod.solve(m, options.lp_time_limit, options.lp_backend)
            if not out.optimal:
                continue
            if sense == "min":
                lo = max(lo, out.objective - LP_SAFETY)
            else:
                hi = min(hi, out.objective + LP_SAFETY)
    # float bounds may sit an ulp inside the true range when they are tight
    return lo - RANGE_PAD * (1.0 + abs(lo)), hi + RANGE_PAD * (1.0 + abs(hi))


# --------------------------------------------------------------------------
# reports

REPORT_FIELDS = ("sample", "label", "epsilon", "verdict", "stage", "min_margin", "margins",
                 "t_bounds", "t_octahedra", "t_multi_neuron", "t_lp", "t_total")


def report_rows(results, epsilon):
    for i, r in enumerate(results):
        yield {
            "sample": i,
            "label": r.label,
            "epsilon": epsilon,
            "verdict": r.verdict,
            "stage": r.stage,
            "min_margin": f"{r.min_margin:.6g}",
            "margins": ";".join("" if not np.isfinite(m) or m == np.inf else f"{m:.6g}" for m in r.margins),
            **{f"t_{k}": f"{r.timings.get(k, 0.0):.4f}" for k in (*TIMING_KEYS, "total")},
        }


def write_report_csv(results, epsilon, stream):
    w = csv.DictWriter(stream, fieldnames=REPORT_FIELDS)
    w.writeheader()
    for row in report_rows(results, epsilon):
        w.writerow(row)


def format_report(results, epsilon):
    """Plain text table of the results plus a summary line."""
    buf = io.StringIO()
    buf.write(f"{'#':>4}  {'label':>5}  {'verdict':<10} {'stage':<7} {'min margin':>11} {'time':>8}\n")
    for row in report_rows(results, epsilon):
        buf.write(f"{row['sample']:>4}  {row['label']!s:>5}  {row['verdict']:<10} {row['stage']:<7} "
                  f"{row['min_margin']:>11} {row['t_total']:>8}\n")
    buf.write(summary_line(results) + "\n")
    return buf.getvalue()


def summary_line(results):
    counts = {v: sum(r.verdict == v for r in results) for v in ("verified", "falsified", "unknown")}
    mean_t = np.mean([r.timings.get("total", 0.0) for r in results]) if results else 0.0
    return (f"verified {counts['verified']} / falsified {counts['falsified']} / unknown {counts['unknown']}"
            f", mean time {mean_t:.3f}s")
