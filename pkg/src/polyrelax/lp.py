"""Linear programs: a small model builder, solver backends and the LP text format.

Two backends are available:

``scipy``
    HiGHS through :func:`scipy.optimize.linprog` (the default).
``external``
    Writes the model in LP text format, runs an external solver binary and
    reads its solution file. The binary is taken from ``POLYRELAX_LP_SOLVER``
    and called with HiGHS command line conventions::

        <solver> --model_file model.lp --solution_file model.sol --time_limit T

    The solution file must follow the HiGHS text layout: a ``Model status``
    line followed by the status, an ``Objective <value>`` line and a
    ``# Columns <n>`` block of ``<name> <value>`` lines.

``POLYRELAX_LP_BACKEND`` selects the backend when none is passed explicitly.
"""
import os
import re
import subprocess
import tempfile
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import BackendUnavailable, ParseError

RESIDUAL_TOL = 1e-6
STATUSES = ("optimal", "infeasible", "unbounded", "timeout", "numeric-failure")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]]*$")


class LpModel:
    """Continuous linear program in variables with (possibly infinite) bounds.

    Constraints are stored row-wise as sparse ``(index, coefficient)`` arrays
    with a sense in ``{">=", "<=", "="}``.
    """

    def __init__(self):
        self.names = []
        self.lower = []
        self.upper = []
        self.rows = []  # (idx, coef, sense, rhs, name)
        self.objective = {}
        self.sense = "min"
        self._by_name = {}

    @property
    def n_vars(self):
        return len(self.names)

    @property
    def n_rows(self):
        return len(self.rows)

    def add_var(self, name=None, lower=-np.inf, upper=np.inf):
        j = len(self.names)
        name = f"x{j}" if name is None else str(name)
        if not _NAME.match(name):
            raise ValueError(f"invalid variable name {name!r}")
        if name in self._by_name:
            raise ValueError(f"duplicate variable {name!r}")
        lower, upper = float(lower), float(upper)
        if np.isnan(lower) or np.isnan(upper):
            raise ValueError("NaN variable bound")
        self.names.append(name)
        self.lower.append(lower)
        self.upper.append(upper)
        self._by_name[name] = j
        return j

    def add_vars(self, n, prefix=None, lower=-np.inf, upper=np.inf):
        """Add ``n`` variables named ``prefix0..`` (default names without a prefix)."""
        lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), (n,))
        upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), (n,))
        names = [None] * n if prefix is None else [f"{prefix}{i}" for i in range(n)]
        return np.array([self.add_var(names[i], lower[i], upper[i]) for i in range(n)], dtype=np.int64)

    def index(self, name):
        return self._by_name[name]

    def set_bounds(self, j, lower=None, upper=None):
        if lower is not None:
            self.lower[j] = float(lower)
        if upper is not None:
            self.upper[j] = float(upper)

    def add_constraint(self, coefs, sense, rhs, name=None):
        """Add ``sum coefs[j] * x_j  sense  rhs`` with ``coefs`` a ``{index: value}`` dict."""
        idx = np.fromiter(coefs.keys(), dtype=np.int64, count=len(coefs))
        val = np.fromiter(coefs.values(), dtype=np.float64, count=len(coefs))
        self._add(idx, val, sense, rhs, name)

    def add_rows(self, a, sense, rhs, cols):
        """Add dense rows ``a @ x[cols]  sense  rhs``."""
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        rhs = np.broadcast_to(np.asarray(rhs, dtype=np.float64), (len(a),))
        cols = np.asarray(cols, dtype=np.int64)
        if a.shape[1] != len(cols):
            raise ValueError("row width does not match the column list")
        for row, r in zip(a, rhs):
            nz = np.flatnonzero(row)
            self._add(cols[nz], row[nz], sense, r, None)

    def _add(self, idx, val, sense, rhs, name):
        if sense not in (">=", "<=", "="):
            raise ValueError(f"unknown sense {sense!r}")
        if len(idx) and (idx.min() < 0 or idx.max() >= self.n_vars):
            raise ValueError("constraint references an undeclared variable")
        if np.any(np.isnan(val)) or np.isnan(rhs):
            raise ValueError("NaN in constraint")
        self.rows.append((idx, val, sense, float(rhs), name))

    def set_objective(self, coefs, sense="min"):
        if sense not in ("min", "max"):
            raise ValueError(f"unknown objective sense {sense!r}")
        for j in coefs:
            if not 0 <= j < self.n_vars:
                raise ValueError("objective references an undeclared variable")
        self.objective = {int(j): float(v) for j, v in coefs.items()}
        self.sense = sense

    def copy(self):
        m = LpModel()
        m.names = list(self.names)
        m.lower = list(self.lower)
        m.upper = list(self.upper)
        m.rows = list(self.rows)
        m.objective = dict(self.objective)
        m.sense = self.sense
        m._by_name = dict(self._by_name)
        return m

    def matrix(self):
        """Constraint matrix (CSR), senses and right-hand sides."""
        if not self.rows:
            return sp.csr_matrix((0, self.n_vars)), [], np.zeros(0)
        indptr = np.cumsum([0] + [len(r[0]) for r in self.rows])
        idx = np.concatenate([r[0] for r in self.rows])
        val = np.concatenate([r[1] for r in self.rows])
        A = sp.csr_matrix((val, idx, indptr), shape=(self.n_rows, self.n_vars))
        return A, [r[2] for r in self.rows], np.array([r[3] for r in self.rows])

    def cost(self):
        c = np.zeros(self.n_vars)
        for j, v in self.objective.items():
            c[j] = v
        return c

    def residuals(self, x):
        """Largest violation of any constraint or bound by ``x``."""
        x = np.asarray(x, dtype=np.float64)
        A, senses, rhs = self.matrix()
        worst = 0.0
        if len(rhs):
            ax = A @ x
            s = np.array(senses)
            viol = np.where(s == ">=", rhs - ax, np.where(s == "<=", ax - rhs, np.abs(ax - rhs)))
            worst = max(worst, float(viol.max()))
        if self.n_vars:
            worst = max(worst, float(np.max(np.array(self.lower) - x)), float(np.max(x - np.array(self.upper))))
        return worst


@dataclass
class LpOutcome:
    status: str
    objective: float = None
    x: np.ndarray = None
    time: float = 0.0
    message: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if (self.objective is not None) != (self.status == "optimal"):
            raise ValueError("an objective value is reported exactly for optimal outcomes")

    @property
    def optimal(self):
        return self.status == "optimal"


def _checked(model, status, obj, x, t, msg=""):
    if status == "optimal":
        if x is None or not np.all(np.isfinite(x)) or model.residuals(x) > RESIDUAL_TOL:
            return LpOutcome("numeric-failure", time=t, message="optimal point violates constraints")
        return LpOutcome("optimal", float(obj), x, t, msg)
    return LpOutcome(status, time=t, message=msg)


def _solve_scipy(model, time_limit):
    A, senses, rhs = model.matrix()
    s = np.array(senses)
    sign = -1.0 if model.sense == "max" else 1.0
    c = sign * model.cost()
    ge, le, eq = s == ">=", s == "<=", s == "="
    A_ub = sp.vstack([-A[ge], A[le]]) if (ge.any() or le.any()) else None
    b_ub = np.concatenate([-rhs[ge], rhs[le]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = rhs[eq] if eq.any() else None
    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi) for lo, hi in zip(model.lower, model.upper)]
    t0 = time.perf_counter()
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
                  options={"time_limit": float(time_limit)})
    t = time.perf_counter() - t0
    status = {0: "optimal", 1: "timeout", 2: "infeasible", 3: "unbounded"}.get(res.status, "numeric-failure")
    obj = None if res.fun is None else sign * res.fun
    return _checked(model, status, obj, res.x, t, res.message)


def _solve_external(model, time_limit):
    solver = os.environ.get("POLYRELAX_LP_SOLVER")
    if not solver:
        raise BackendUnavailable("POLYRELAX_LP_SOLVER is not set")
    with tempfile.TemporaryDirectory() as tmp:
        lp_path = os.path.join(tmp, "model.lp")
        sol_path = os.path.join(tmp, "model.sol")
        with open(lp_path, "w") as f:
            f.write(export_lp_text(model))
        t0 = time.perf_counter()
        try:
            subprocess.run(
                [solver, "--model_file", lp_path, "--solution_file", sol_path, "--time_limit", repr(float(time_limit))],
                capture_output=True, timeout=time_limit + 30, check=False,
            )
        except FileNotFoundError as exc:
            raise BackendUnavailable(f"cannot run {solver}") from exc
        except subprocess.TimeoutExpired:
            return LpOutcome("timeout", time=time.perf_counter() - t0)
        t = time.perf_counter() - t0
        if not os.path.exists(sol_path):
            return LpOutcome("numeric-failure", time=t, message="solver wrote no solution file")
        with open(sol_path) as f:
            status, obj, values = parse_solution_text(f.read())
    x = None
    if values is not None:
        x = np.zeros(model.n_vars)
        for name, v in values.items():
            if name in model._by_name:
                x[model.index(name)] = v
    return _checked(model, status, obj, x, t)


BACKENDS = {"scipy": _solve_scipy, "external": _solve_external}


def solve(model, time_limit=60.0, backend=None):
    """Solve ``model``; the returned outcome never claims optimality for an infeasible point.

    Raises
    ------
    BackendUnavailable
        If the selected backend is unknown or not configured.
    """
    backend = backend or os.environ.get("POLYRELAX_LP_BACKEND", "scipy")
    if backend not in BACKENDS:
        raise BackendUnavailable(f"unknown LP backend {backend!r}")
    if time_limit <= 0:
        raise ValueError("time limit must be positive")
    return BACKENDS[backend](model, time_limit)


# --------------------------------------------------------------------------
# text formats


def _num(v):
    if np.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return repr(float(v))


def _expr(idx, val, names):
    if len(idx) == 0:
        return "0 " + names[0] if names else "0"
    parts = []
    for j, v in zip(idx, val):
        sign = "-" if v < 0 or (v == 0 and np.signbit(v)) else "+"
        parts.append(f"{sign} {_num(abs(v))} {names[j]}")
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else "-" + s[1:]


def export_lp_text(model):
    """The model in CPLEX LP text format with floats written exactly (``repr``)."""
    names = model.names
    out = ["\\ polyrelax model", "Minimize" if model.sense == "min" else "Maximize"]
    obj = sorted(model.objective.items())
    out.append(" obj: " + _expr([j for j, _ in obj], [v for _, v in obj], names))
    out.append("Subject To")
    for i, (idx, val, sense, rhs, name) in enumerate(model.rows):
        label = name or f"c{i}"
        out.append(f" {label}: {_expr(idx, val, names)} {sense} {_num(rhs)}")
    out.append("Bounds")
    for j, n in enumerate(names):
        out.append(f" {_num(model.lower[j])} <= {n} <= {_num(model.upper[j])}")
    out.append("End")
    return "\n".join(out) + "\n"


def _parse_expr(text, model, lineno):
    """Terms are whitespace separated: optional sign, optional coefficient, name."""
    idx, val = [], []
    sign, coef = 1.0, None
    for tok in text.split():
        if tok in ("+", "-"):
            sign = -1.0 if tok == "-" else 1.0
        elif _NAME.match(tok) and tok != "inf":
            if tok not in model._by_name:
                raise ParseError(f"unknown variable {tok!r}", line=lineno)
            idx.append(model.index(tok))
            val.append(sign * (1.0 if coef is None else coef))
            sign, coef = 1.0, None
        else:
            try:
                coef = float(tok)
            except ValueError:
                raise ParseError(f"bad term {tok!r}", line=lineno) from None
    return idx, val


def parse_lp_text(text):
    """Read a model written by :func:`export_lp_text`.

    Variables are declared by the ``Bounds`` section, so it is read first.
    """
    lines = text.splitlines()
    sections = {}
    cur = None
    for no, raw in enumerate(lines, 1):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in ("minimize", "maximize", "subject to", "bounds", "end"):
            cur = key
            sections.setdefault(cur, [])
            continue
        if cur is None:
            raise ParseError("content before the first section", line=no)
        sections[cur].append((no, line))
    if "bounds" not in sections:
        raise ParseError("missing Bounds section")
    model = LpModel()
    for no, line in sections["bounds"]:
        parts = [p.strip() for p in line.split("<=")]
        if len(parts) != 3:
            raise ParseError(f"bad bounds line {line!r}", line=no)
        try:
            model.add_var(parts[1], float(parts[0]), float(parts[2]))
        except ValueError as exc:
            raise ParseError(str(exc), line=no) from None
    sense = "max" if "maximize" in sections else "min"
    obj = sections.get(sense + "imize", [])
    coefs = {}
    for no, line in obj:
        body = line.split(":", 1)[1] if ":" in line else line
        idx, val = _parse_expr(body, model, no)
        for j, v in zip(idx, val):
            coefs[j] = coefs.get(j, 0.0) + v
    model.set_objective(coefs, sense)
    for no, line in sections.get("subject to", []):
        name, body = line.split(":", 1) if ":" in line else (None, line)
        m = re.search(r"(>=|<=|=)\s*(\S+)\s*$", body)
        if not m:
            raise ParseError(f"constraint without sense {line!r}", line=no)
        idx, val = _parse_expr(body[: m.start()], model, no)
        coefs = {}
        for j, v in zip(idx, val):
            coefs[j] = coefs.get(j, 0.0) + v
        model.add_constraint(coefs, m.group(1), float(m.group(2)), name.strip() if name else None)
    return model


_STATUS_WORDS = {
    "optimal": "optimal",
    "infeasible": "infeasible",
    "unbounded": "unbounded",
    "primal infeasible or unbounded": "infeasible",
    "time limit reached": "timeout",
    "iteration limit reached": "timeout",
}


def parse_solution_text(text):
    """Parse a HiGHS-style solution file into ``(status, objective, {name: value})``."""
    lines = [ln.strip() for ln in text.splitlines()]
    status, obj, values = "numeric-failure", None, None
    for i, ln in enumerate(lines):
        if ln == "Model status" and i + 1 < len(lines):
            status = _STATUS_WORDS.get(lines[i + 1].lower(), "numeric-failure")
        elif ln.startswith("Objective"):
            try:
                obj = float(ln.split()[1])
            except (IndexError, ValueError):
                raise ParseError("bad objective line", line=i + 1) from None
        elif ln.startswith("# Columns") and values is None:
            n = int(ln.split()[2])
            values = {}
            for k in range(n):
                parts = lines[i + 1 + k].split()
                values[parts[0]] = float(parts[1])
    if status == "optimal" and (obj is None or values is None):
        status = "numeric-failure"
    return status, (obj if status == "optimal" else None), values
