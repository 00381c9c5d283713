"""Desk-scale optimization: a dense two-phase simplex and a Kelley
cutting-plane loop for chance-constrained problems.

The Kelley loop keeps one auxiliary ``t`` per chance constraint. Each round
solves the LP relaxation, then queries

* the norm row ``t >= ||L' x||`` (gradient cut of the norm when violated),
* the conic hull of ``S(eps)`` at ``(a - mu' x, b - mu' x, t)``
  (lifted tangent cut from :func:`twosided.seps.cone_separate`),
* for robust constraints, the worst-case oracle of :mod:`twosided.distrobust`.

One-sided constraints are linear in ``(b - mu' x, t)`` and enter the master
directly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .distrobust import robust_feasible, robust_separate, worst_sigma_member, soc_gradient_cut
from .errors import DomainError
from .formulation import (AffineExpr, LinearConstraint, build_soc, cc_probability, combine,
                          standardize)
from .gauss import Phi_inv
from .seps import as_eps, cone_contains, cone_separate

DEFAULT_BOUND = 1e4
CUT_TOL = 1e-7
MAX_ROUNDS = 500

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = (
    "optimal", "infeasible", "unbounded", "iteration_limit")


# -- dense LP ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DenseLP:
    """``min c' x`` s.t. ``A[i] x (sense[i]) rhs[i]`` and ``lo <= x <= hi``.

    Bounds default to free variables.
    """

    c: np.ndarray
    A: np.ndarray
    senses: tuple
    rhs: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.size
        A = np.asarray(self.A, dtype=float).reshape(-1, n) if n else np.zeros((len(self.senses), 0))
        rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        senses = tuple(self.senses)
        if A.shape[0] != rhs.size or len(senses) != rhs.size:
            raise DomainError(
                f"constraint data sizes differ: A {A.shape}, rhs {rhs.size}, senses {len(senses)}")
        if any(s not in ("<=", "=", ">=") for s in senses):
            raise DomainError("senses must be '<=', '=' or '>='")
        lo = np.full(n, -np.inf) if self.lo is None else np.asarray(self.lo, dtype=float)
        hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float)
        if lo.shape != (n,) or hi.shape != (n,):
            raise DomainError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(rhs))):
            raise DomainError("LP data must be finite")
        for name, v in (("c", c), ("A", A), ("rhs", rhs), ("senses", senses),
                        ("lo", lo), ("hi", hi)):
            object.__setattr__(self, name, v)

    @property
    def n(self):
        return self.c.size

    def residual(self, x):
        """Largest constraint or bound violation at ``x``."""
        r = self.A @ x - self.rhs if self.rhs.size else np.zeros(0)
        worst = 0.0
        for ri, s in zip(r, self.senses):
            worst = max(worst, ri if s == "<=" else -ri if s == ">=" else abs(ri))
        if self.n:
            worst = max(worst, float(np.max(self.lo - x)), float(np.max(x - self.hi)))
        return worst


@dataclass
class SolveReport:
    status: str
    objective: float
    point: np.ndarray
    cuts_added: int = 0
    iterations: int = 0
    variables: tuple = ()
    probabilities: list = field(default_factory=list)
    history: list = field(default_factory=list)
    cuts: list = field(default_factory=list)
    residual: float = 0.0

    def values(self):
        return dict(zip(self.variables, self.point.tolist()))

    def to_dict(self):
        obj = self.objective if math.isfinite(self.objective) else None
        return {"status": self.status, "objective": obj,
                "point": dict(zip(self.variables, self.point.tolist())) if self.variables
                else self.point.tolist(),
                "cuts_added": self.cuts_added, "iterations": self.iterations,
                "probabilities": self.probabilities, "residual": self.residual}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def history_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "obj", "max_violation", "cuts"])
        for row in self.history:
            w.writerow([row["iter"], repr(row["obj"]), repr(row["max_violation"]), row["cuts"]])
        return buf.getvalue()


class _Tableau:
    """Dense simplex tableau with Dantzig pricing and Bland's rule while degenerate."""

    def __init__(self, T, basis, tol):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.pivots = 0

    def pivot(self, r, c):
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = c
        self.pivots += 1

    def run(self, allowed, max_pivots):
        """Minimize the last row's objective; returns ``optimal``, ``unbounded`` or the limit."""
        T, tol = self.T, self.tol
        bland = False
        while self.pivots < max_pivots:
            red = T[-1, :-1]
            cand = np.flatnonzero((red < -tol) & allowed)
            if cand.size == 0:
                return OPTIMAL
            c = int(cand[0]) if bland else int(cand[np.argmin(red[cand])])
            colv = T[:-1, c]
            rows = np.flatnonzero(colv > tol)
            if rows.size == 0:
                return UNBOUNDED
            ratios = T[rows, -1] / colv[rows]
            best = ratios.min()
            ties = rows[ratios <= best + tol * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            bland = best <= tol
            self.pivot(r, c)
        return ITERATION_LIMIT


def simplex_solve(lp, tol=1e-9, max_pivots=50000):
    """Two-phase dense simplex.

    Variables are shifted to their finite bound (or split when free), finite
    upper bounds become rows, rows are sign-normalized so that the right-hand
    side is nonnegative, and artificials seed the first phase.
    """
    n = lp.n
    cols = []      # per original variable: list of (new column, sign)
    shift = np.zeros(n)
    extra_rows = []
    k = 0
    for j in range(n):
        lo, hi = lp.lo[j], lp.hi[j]
        if lo > hi:
            return SolveReport(INFEASIBLE, math.inf, np.full(n, np.nan))
        if math.isfinite(lo):
            shift[j] = lo
            cols.append([(k, 1.0)])
            if math.isfinite(hi):
                extra_rows.append((k, hi - lo))
            k += 1
        elif math.isfinite(hi):
            shift[j] = hi
            cols.append([(k, -1.0)])
            k += 1
        else:
            cols.append([(k, 1.0), (k + 1, -1.0)])
            k += 2
    n_u = k
    m0 = lp.rhs.size
    m = m0 + len(extra_rows)
    M = np.zeros((m, n_u))
    b = np.zeros(m)
    cost = np.zeros(n_u)
    for j in range(n):
        for col, sgn in cols[j]:
            if m0:
                M[:m0, col] += sgn * lp.A[:, j]
            cost[col] += sgn * lp.c[j]
    if m0:
        b[:m0] = lp.rhs - lp.A @ shift
    senses = list(lp.senses)
    for i, (col, ub) in enumerate(extra_rows):
        M[m0 + i, col] = 1.0
        b[m0 + i] = ub
        senses.append("<=")
    for i in range(m):
        if b[i] < 0:
            M[i] *= -1.0
            b[i] *= -1.0
            senses[i] = {"<=": ">=", ">=": "<=", "=": "="}[senses[i]]

    n_slack = sum(s != "=" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    width = n_u + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n_u] = M
    T[:m, -1] = b
    basis = [0] * m
    s_col, a_col = n_u, n_u + n_slack
    art_cols = []
    for i, s in enumerate(senses):
        if s == "<=":
            T[i, s_col] = 1.0
            basis[i] = s_col
            s_col += 1
        else:
            if s == ">=":
                T[i, s_col] = -1.0
                s_col += 1
            T[i, a_col] = 1.0
            basis[i] = a_col
            art_cols.append(a_col)
            a_col += 1
    scale = max(1.0, float(np.abs(b).max()) if m else 1.0)
    tab = _Tableau(T, basis, tol)
    allowed = np.ones(width, dtype=bool)

    if art_cols:
        T[-1, art_cols] = 1.0
        for i, s in enumerate(senses):
            if s != "<=":
                T[-1] -= T[i]
        status = tab.run(allowed, max_pivots)
        if status == ITERATION_LIMIT:
            return SolveReport(ITERATION_LIMIT, math.inf, np.full(n, np.nan),
                               iterations=tab.pivots)
        if -T[-1, -1] > tol * scale:
            return SolveReport(INFEASIBLE, math.inf, np.full(n, np.nan), iterations=tab.pivots)
        is_art = np.zeros(width, dtype=bool)
        is_art[art_cols] = True
        keep = []
        for i in range(m):
            if is_art[tab.basis[i]]:
                row = np.abs(T[i, :width]) * ~is_art
                j = int(np.argmax(row))
                if row[j] > tol:
                    tab.pivot(i, j)
                    keep.append(i)
            else:
                keep.append(i)
        T = np.vstack([T[keep], T[-1:]])
        tab.T = T
        tab.basis = [tab.basis[i] for i in keep]
        allowed = ~is_art
        T[:, art_cols] = 0.0

    T[-1] = 0.0
    T[-1, :n_u] = cost
    for i, bj in enumerate(tab.basis):
        if T[-1, bj] != 0.0:
            T[-1] -= T[-1, bj] * T[i]
    status = tab.run(allowed, max_pivots)
    if status != OPTIMAL:
        return SolveReport(status, -math.inf if status == UNBOUNDED else math.inf,
                           np.full(n, np.nan), iterations=tab.pivots)

    # re-solve the final basis against the original data to shed drift
    u = np.zeros(width)
    full = np.zeros((m, width))
    full[:, :n_u] = M
    s_col = n_u
    for i, s in enumerate(senses):
        if s != "=":
            full[i, s_col] = 1.0 if s == "<=" else -1.0
            s_col += 1
    rows = list(range(m)) if len(tab.basis) == m else _independent_rows(full, tab.basis)
    try:
        B = full[np.ix_(rows, tab.basis)]
        u[tab.basis] = np.linalg.solve(B, b[rows])
    except np.linalg.LinAlgError:
        u[tab.basis] = tab.T[:-1, -1]
    if np.any(u[tab.basis] < -1e-7 * scale):
        u[tab.basis] = tab.T[:-1, -1]
    u = np.maximum(u, 0.0)
    x = shift.copy()
    for j in range(n):
        for col, sgn in cols[j]:
            x[j] += sgn * u[col]
    return SolveReport(OPTIMAL, float(lp.c @ x), x, iterations=tab.pivots,
                       residual=lp.residual(x))


def _independent_rows(full, basis):
    """Pick ``len(basis)`` rows making the basis matrix nonsingular."""
    sub = full[:, basis]
    _, _, piv = _qr_pivot_rows(sub)
    return sorted(piv[:len(basis)])


def _qr_pivot_rows(A):
    from scipy.linalg import qr

    return qr(A.T, pivoting=True)


# -- cutting planes ----------------------------------------------------------

@dataclass(frozen=True)
class Cut:
    """A generated cut in problem variables, tagged with its origin."""

    row: LinearConstraint
    kind: str
    index: int
    local: tuple = ()


@dataclass
class KelleyOptions:
    tol: float = CUT_TOL
    max_rounds: int = MAX_ROUNDS
    default_bound: float = DEFAULT_BOUND
    seed_cuts: bool = True


def _master(variables, objective, rows, bounds):
    idx = {v: i for i, v in enumerate(variables)}
    A = np.zeros((len(rows), len(variables)))
    rhs = np.zeros(len(rows))
    senses = []
    for i, r in enumerate(rows):
        for name, coef in r.expr.coeffs.items():
            A[i, idx[name]] += coef
        rhs[i] = r.rhs - r.expr.constant
        senses.append(r.sense)
    lo = np.array([bounds[v][0] for v in variables])
    hi = np.array([bounds[v][1] for v in variables])
    return DenseLP(objective.gradient(variables), A, tuple(senses), rhs, lo, hi)


def _norm_cut(vec, rhs, point):
    """Gradient cut of ``||vec|| <= rhs`` at ``point``; ``None`` if ``vec`` vanishes."""
    vals = np.array([e.evaluate(point) for e in vec])
    norm = float(np.linalg.norm(vals))
    if norm == 0.0:
        return None
    return LinearConstraint(combine(vals / norm, vec) - rhs, "<=", 0.0)


def _with_bounds(variables, bounds, default):
    out, defaulted = {}, []
    for v in variables:
        lo, hi = bounds.get(v, (-math.inf, math.inf))
        if not math.isfinite(lo):
            lo = -default
            defaulted.append(v)
        if not math.isfinite(hi):
            hi = default
            defaulted.append(v)
        out[v] = (lo, hi)
    return out, sorted(set(defaulted))


def _cutting_plane(variables, objective, rows, bounds, oracle, opts):
    rows = list(rows)
    history, cuts = [], []
    lp_pivots = 0
    report = None
    for it in range(1, opts.max_rounds + 1):
        report = simplex_solve(_master(variables, objective, rows, bounds))
        lp_pivots += report.iterations
        if report.status != OPTIMAL:
            report.variables = tuple(variables)
            report.iterations = it
            report.cuts_added = len(cuts)
            report.history = history
            report.cuts = cuts
            return report
        point = dict(zip(variables, report.point.tolist()))
        new, worst = oracle(point, opts.tol)
        history.append({"iter": it, "obj": report.objective + objective.constant,
                        "max_violation": worst, "cuts": len(cuts)})
        if not new:
            break
        cuts.extend(new)
        rows.extend(c.row for c in new)
    else:
        report.status = ITERATION_LIMIT
    report.objective += objective.constant
    report.variables = tuple(variables)
    report.iterations = len(history)
    report.cuts_added = len(cuts)
    report.history = history
    report.cuts = cuts
    return report


def kelley_solve(p, opts=None):
    """Solve a :class:`ChanceProblem` with its exact conic constraints.

    Returns
    -------
    SolveReport
        ``point`` covers the problem variables followed by one ``t`` per
        chance constraint; ``probabilities`` lists the true probability of
        each two-sided then one-sided constraint at the final point.
    """
    opts = opts or KelleyOptions()
    variables = list(p.variables)
    rows = list(p.linear)
    t_names = []
    for k in range(len(p.ccs) + len(p.one_sided)):
        name = f"t_{k}"
        while name in variables:
            name = "_" + name
        t_names.append(name)
        variables.append(name)
    bounds, defaulted = _with_bounds(p.variables, p.bounds, opts.default_bound)
    if defaulted:
        warnings.warn(f"default bounds +-{opts.default_bound:g} applied to {defaulted}",
                      stacklevel=2)
    for name in t_names:
        bounds[name] = (0.0, opts.default_bound)

    parts = []
    for k, cc in enumerate(p.ccs):
        eps = as_eps(cc.eps)
        t = AffineExpr.var(t_names[k])
        if cc.robust is None:
            a, b, y = standardize(cc)
            parts.append(("exact", k, cc, a, b, y, t))
            if opts.seed_cuts:
                rows.append(LinearConstraint(a - t * Phi_inv(eps), "<=", 0.0))
                rows.append(LinearConstraint(b - t * Phi_inv(1.0 - eps), ">=", 0.0))
                rows.append(LinearConstraint(a - b - t * (2.0 * Phi_inv(eps / 2.0)), "<=", 0.0))
        else:
            parts.append(("robust", k, cc, cc.lower, cc.upper, cc.xi_coeffs, t))
    for j, cc in enumerate(p.one_sided):
        k = len(p.ccs) + j
        _, b, y = standardize(cc)
        t = AffineExpr.var(t_names[k])
        rows.append(LinearConstraint(b - t * Phi_inv(1.0 - cc.eps), ">=", 0.0))
        parts.append(("norm", k, cc, None, b, y, t))

    def oracle(point, tol):
        new, worst = [], 0.0
        for kind, k, cc, a, b, y, t in parts:
            tv = t.evaluate(point)
            if kind == "robust":
                xs = np.array([e.evaluate(point) for e in y])
                av, bv = a.evaluate(point), b.evaluate(point)
                m, ws = worst_sigma_member(xs, cc.robust.cov_family)
                viol = math.sqrt(ws) - tv
                if viol > tol:
                    gx, ct = soc_gradient_cut(xs, cc.robust.cov_family.members[m])
                    expr = combine(gx, y) + t * ct
                    new.append(Cut(LinearConstraint(expr, "<=", 0.0), "soc", k))
                    worst = max(worst, viol)
                    continue
                if robust_feasible(av, bv, xs, cc.eps, cc.robust.mean_box,
                                   cc.robust.cov_family):
                    continue
                try:
                    # the norm row holds within tol here; clamp t so rounding
                    # below sqrt(ws) cannot select a near-zero norm cut
                    rc = robust_separate(av, bv, xs, cc.eps, cc.robust.mean_box,
                                         cc.robust.cov_family, t=max(tv, math.sqrt(ws)))
                except DomainError:
                    continue
                viol = rc.value(av, bv, xs, tv)
                worst = max(worst, viol)
                if viol > tol:
                    expr = a * rc.ca + b * rc.cb + combine(rc.cx, y) + t * rc.ct
                    new.append(Cut(LinearConstraint(expr, "<=", 0.0), rc.kind, k))
                continue
            row = _norm_cut(y, t, point)
            if row is not None:
                viol = row.residual(point)
                if viol > tol:
                    new.append(Cut(row, "soc", k))
                    worst = max(worst, viol)
                    continue
            if kind == "norm":
                continue
            q = (a.evaluate(point), b.evaluate(point), tv)
            if cone_contains(q, cc.eps):
                continue
            h = cone_separate(q, cc.eps)
            viol = h.violation(q)
            worst = max(worst, viol)
            if viol > tol:
                expr = a * h.a1 + b * h.a2 + t * h.a3
                new.append(Cut(LinearConstraint(expr, "<=", 0.0), "cone", k, tuple(h)))
        return new, worst

    report = _cutting_plane(variables, p.objective, rows, bounds, oracle, opts)
    if report.status == OPTIMAL:
        point = report.values()
        report.probabilities = [_probability(cc, point) for cc in p.ccs + p.one_sided]
    return report


def _probability(cc, point):
    if getattr(cc, "robust", None) is not None:
        return _robust_probability(cc, point)
    return cc_probability(cc, point)


def _robust_probability(cc, point):
    """Smallest true probability over the endpoint means and all members."""
    from .gauss import interval_mass

    xs = np.array([e.evaluate(point) for e in cc.xi_coeffs])
    av, bv = cc.lower.evaluate(point), cc.upper.evaluate(point)
    worst = 1.0
    for cov in cc.robust.cov_family.members:
        sd = math.sqrt(max(float(xs @ cov @ xs), 0.0))
        for mu in cc.robust.mean_box.extreme_means(xs):
            m = float(mu @ xs)
            if sd == 0.0:
                pr = 1.0 if av - m <= 0.0 <= bv - m else 0.0
            else:
                pr = float(interval_mass((av - m) / sd, (bv - m) / sd))
            worst = min(worst, pr)
    return worst


def solve_via_soc(p, mode="outer", opts=None, factor=1.25):
    """Solve the three-cut SOC formulation; norm rows via gradient cuts only.

    ``probabilities`` reports the true probability of each original chance
    constraint at the solution.
    """
    opts = opts or KelleyOptions()
    f = build_soc(p, mode, factor)
    bounds, defaulted = _with_bounds(f.variables, f.bounds, opts.default_bound)
    defaulted = [v for v in defaulted if v in p.variables]
    if defaulted:
        warnings.warn(f"default bounds +-{opts.default_bound:g} applied to {defaulted}",
                      stacklevel=2)

    def oracle(point, tol):
        new, worst = [], 0.0
        for k, row in enumerate(f.soc):
            viol = row.residual(point)
            worst = max(worst, viol)
            if viol > tol:
                cut = _norm_cut(row.vec, row.rhs, point)
                if cut is not None:
                    new.append(Cut(cut, "soc", k))
        return new, worst

    report = _cutting_plane(list(f.variables), f.objective, f.linear, bounds, oracle, opts)
    if report.status == OPTIMAL:
        point = report.values()
        report.probabilities = [_probability(cc, point) for cc in p.ccs + p.one_sided]
    return report
