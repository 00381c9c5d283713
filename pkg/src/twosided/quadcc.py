"""Quadratic chance constraints ``P((a'xi + b)^2 + (c'xi + d)^2 <= k) >= 1 - eps``.

The pair ``(U, V) = (a'xi + b, c'xi + d)`` is a planar Gaussian, so the
exact probability is the Gaussian mass of a disk. Rotating to principal
axes makes the two coordinates independent; the mass is then a 1-D integral
of a closed-form conditional interval mass.

The feasible set ``H(eps)`` need not be convex, so three conservative convex
approximations are provided:

* two-sided split: ``P(|U| <= f1) >= 1 - beta eps``,
  ``P(|V| <= f2) >= 1 - (1 - beta) eps`` and ``f1^2 + f2^2 <= k``;
* robust: the quadratic holds on the ball ``||eta|| <= Gamma`` with
  ``Gamma`` the ``1 - eps`` quantile of the chi distribution, decided through
  an LMI in one scalar multiplier;
* CVaR: ``inf_alpha E[max(q - k + alpha, 0)] - alpha eps <= 0``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import DomainError
from .formulation import GaussianVector
from .gauss import (INV_SQRT_2PI, GAUSS_TRUNCATION, QuadratureSpec, Phi, Phi_inv, bisect_root,
                    chi_cdf, chi_inv, integrate_1d, minimize_1d)
from .seps import as_eps, cone_contains

PSD_TOL = 1e-10
CVAR_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class QuadCCInstance:
    a: np.ndarray
    b: float
    c: np.ndarray
    d: float
    k: float
    dist: GaussianVector
    eps: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if a.size != self.dist.dim or c.size != self.dist.dim:
            raise DomainError("coefficient vectors must match the Gaussian dimension")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "eps", as_eps(self.eps, relaxed=True))

    def with_k(self, k):
        return QuadCCInstance(self.a, self.b, self.c, self.d, k, self.dist, self.eps)


def example_instance(x, y, eps, k=1.0):
    """``P((x xi1)^2 + (y xi2)^2 <= k) >= 1 - eps`` with i.i.d. standard ``xi``."""
    return QuadCCInstance((x, 0.0), 0.0, (0.0, y), 0.0, k, GaussianVector.standard(2), eps)


@dataclass(frozen=True, eq=False)
class Gaussian2Reduced:
    mean2: np.ndarray
    cov2: np.ndarray

    def principal(self):
        """Means and standard deviations along the principal axes, smaller first."""
        w, Q = np.linalg.eigh(self.cov2)
        m = Q.T @ self.mean2
        sd = np.sqrt(np.maximum(w, 0.0))
        floor = 1e-15 * max(1.0, float(sd.max()))
        sd = np.where(sd <= floor, 0.0, sd)
        return m, sd


def reduce_to_2d(inst):
    mu, S = inst.dist.mean, inst.dist.cov
    mean2 = np.array([inst.a @ mu + inst.b, inst.c @ mu + inst.d])
    Sa, Sc = S @ inst.a, S @ inst.c
    cov2 = np.array([[inst.a @ Sa, inst.a @ Sc], [inst.c @ Sa, inst.c @ Sc]])
    return Gaussian2Reduced(mean2, 0.5 * (cov2 + cov2.T))


def _interval_mass_vec(lo, hi):
    """Vectorized ``Phi(hi) - Phi(lo)`` using the tail with less cancellation."""
    upper = lo > 0
    out = np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    return np.maximum(out, 0.0)


def _disk_mass(m, sd, k, tol):
    """``P(U^2 + V^2 <= k)`` for independent ``U ~ N(m0, sd0)``, ``V ~ N(m1, sd1)``, ``sd0 <= sd1``."""
    if k < 0:
        return 0.0
    r = math.sqrt(k)
    m0, m1 = float(m[0]), float(m[1])
    s0, s1 = float(sd[0]), float(sd[1])
    if s1 == 0.0:
        return 1.0 if m0 * m0 + m1 * m1 <= k else 0.0
    if s0 == 0.0:
        w2 = k - m0 * m0
        if w2 < 0:
            return 0.0
        w = math.sqrt(w2)
        return float(_interval_mass_vec(np.array((-w - m1) / s1), np.array((w - m1) / s1)))
    if k == 0.0:
        return 0.0
    # u = r sin(theta) over the part of [-r, r] within 9 sd of m0
    u_lo = max(-r, m0 - GAUSS_TRUNCATION * s0)
    u_hi = min(r, m0 + GAUSS_TRUNCATION * s0)
    if u_lo >= u_hi:
        return 0.0
    th_lo, th_hi = math.asin(u_lo / r), math.asin(u_hi / r)
    # integrate in d = theta - th_c so nodes keep full relative precision
    # when the window is narrow (tiny s0)
    th_c = 0.5 * (th_lo + th_hi)
    sc, cc = math.sin(th_c), math.cos(th_c)
    off = r * sc - m0

    def f(d):
        sd_, cd_ = np.sin(d), -2.0 * np.sin(0.5 * d) ** 2   # sin d, cos d - 1
        z = (r * (sc * cd_ + cc * sd_) + off) / s0
        w = np.maximum(r * (cc * (1.0 + cd_) - sc * sd_), 0.0)
        inner = _interval_mass_vec((-w - m1) / s1, (w - m1) / s1)
        return INV_SQRT_2PI * np.exp(-0.5 * z * z) / s0 * inner * w

    breaks = []
    for j in (-4.0, 0.0, 4.0):
        u = m0 + j * s0
        if u_lo < u < u_hi:
            breaks.append(math.asin(u / r) - th_c)
    value = integrate_1d(f, th_lo - th_c, th_hi - th_c, QuadratureSpec(abs_tol=tol, max_depth=60),
                         breakpoints=breaks)
    return min(1.0, max(0.0, value))


def true_prob(inst, tol=1e-7):
    """Exact ``P((a'xi + b)^2 + (c'xi + d)^2 <= k)`` to absolute error ``tol``.

    Raises
    ------
    QuadratureError
        If the adaptive rule cannot meet ``tol``.
    """
    if inst.k < 0:
        raise DomainError("k must be nonnegative")
    m, sd = reduce_to_2d(inst).principal()
    return _disk_mass(m, sd, inst.k, 0.5 * tol)


# -- nonconvexity counterexample ---------------------------------------------

WITNESS_EPS = 0.455


def nonconvexity_witness(tol=1e-7, n_trace=61):
    """Probabilities at ``(0.6, 1.0)``, ``(1.0, 0.6)`` and their midpoint.

    Both endpoints reach ``1 - 0.455 = 0.545`` while the midpoint does not,
    so ``H(0.455)`` is not convex. Also traces the line ``y = 1.6 - x``.
    """
    level = 1.0 - WITNESS_EPS
    left = true_prob(example_instance(0.6, 1.0, WITNESS_EPS), tol)
    right = true_prob(example_instance(1.0, 0.6, WITNESS_EPS), tol)
    mid = true_prob(example_instance(0.8, 0.8, WITNESS_EPS), tol)
    trace = []
    for x in np.linspace(0.5, 1.1, n_trace):
        y = 1.6 - x
        trace.append((float(x), float(y), true_prob(example_instance(x, y, WITNESS_EPS), tol)))
    return {
        "eps": WITNESS_EPS, "level": level,
        "endpoint_left": left, "endpoint_right": right, "midpoint": mid,
        "midpoint_closed_form": float(chi_cdf(2, 1.0 / 0.8)),
        "nonconvex": bool(left >= level and right >= level and mid < level),
        "trace": trace,
    }


def trace_csv(trace):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "true_prob"])
    for row in trace:
        w.writerow([repr(v) for v in row])
    return buf.getvalue()


# -- two-sided split ---------------------------------------------------------

def min_abs_bound(mean, sd, level_eps):
    """Smallest ``f`` with ``P(|N(mean, sd^2)| <= f) >= 1 - level_eps``."""
    mean = abs(float(mean))
    if sd == 0.0:
        return mean
    if not level_eps > 0.0:
        return math.inf
    q = -float(Phi_inv(min(level_eps / 2.0, 0.5)))

    def captured_excess(f):
        # (1 - level_eps) - P(|N| > f) complement, increasing in f
        return level_eps - float(Phi((-f - mean) / sd) + Phi((mean - f) / sd))

    lo, hi = 0.0, (mean + sd * q) * (1.0 + 1e-12)
    if captured_excess(lo) >= 0.0:
        return 0.0
    return bisect_root(captured_excess, lo, hi, tol=1e-15)


def two_sided_feasible(inst, beta=0.5):
    """Union-bound split of the quadratic constraint into two absolute-value ones.

    Returns
    -------
    feasible : bool
    f1, f2 : float
        Minimal half-widths; ``inf`` when a side's budget vanishes.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError("beta must lie in (0, 1)")
    eps = inst.eps
    red = reduce_to_2d(inst)
    sd = np.sqrt(np.maximum(np.diag(red.cov2), 0.0))
    f1 = min_abs_bound(red.mean2[0], sd[0], beta * eps)
    f2 = min_abs_bound(red.mean2[1], sd[1], (1.0 - beta) * eps)
    feasible = math.isfinite(f1) and math.isfinite(f2) and f1 * f1 + f2 * f2 <= inst.k
    return feasible, f1, f2


def tune_beta(inst, tol=1e-8):
    """``beta`` minimizing ``f1^2 + f2^2`` (golden section), with the result."""
    def slack(beta):
        _, f1, f2 = two_sided_feasible(inst, beta)
        return f1 * f1 + f2 * f2

    beta, value = minimize_1d(slack, 1e-9, 1.0 - 1e-9, tol=tol)
    return beta, value <= inst.k


# -- robust LMI --------------------------------------------------------------

def standardize_quad(inst):
    """Coefficients for i.i.d. standard ``xi``: ``a -> L'a``, ``b -> b + a'mu``."""
    L, mu = inst.dist.chol, inst.dist.mean
    return L.T @ inst.a, inst.b + inst.a @ mu, L.T @ inst.c, inst.d + inst.c @ mu


def robust_matrix(a, b, c, d, k, gamma, lam):
    n = a.size
    M = np.zeros((n + 3, n + 3))
    M[np.arange(n), np.arange(n)] = lam
    M[n, n] = k - lam * gamma * gamma
    M[:n, n + 1] = M[n + 1, :n] = a
    M[:n, n + 2] = M[n + 2, :n] = c
    M[n, n + 1] = M[n + 1, n] = b
    M[n, n + 2] = M[n + 2, n] = d
    M[n + 1, n + 1] = M[n + 2, n + 2] = 1.0
    return M


def _ball_probes(a, c, gamma):
    G = np.outer(a, a) + np.outer(c, c)
    dirs = [a, c]
    if a.size:
        dirs.append(np.linalg.eigh(G)[1][:, -1])
    for v in dirs:
        nv = np.linalg.norm(v)
        if nv > 0:
            yield gamma * v / nv
            yield -gamma * v / nv


def _min_eig(M):
    return float(np.linalg.eigvalsh(M)[0])


def robust_feasible(inst, tol=1e-13):
    """Robust counterpart over the ball ``||eta|| <= Gamma``.

    Maximizes the (concave) smallest eigenvalue of the LMI matrix over
    ``lam`` in ``[0, k / Gamma^2]``; feasible iff that maximum is at least
    ``-1e-10``.

    Returns
    -------
    feasible : bool
    lam : float or None
        The maximizing multiplier when feasible.
    """
    if inst.k < 0:
        return False, None
    a, b, c, d = standardize_quad(inst)
    n = a.size
    if n == 0:
        return b * b + d * d <= inst.k, 0.0
    gamma = chi_inv(n, 1.0 - inst.eps)
    lam_hi = inst.k / (gamma * gamma)
    # a violated point of the ball refutes the LMI at once (the two are equivalent)
    for eta in _ball_probes(a, c, gamma):
        if (a @ eta + b) ** 2 + (c @ eta + d) ** 2 > inst.k * (1.0 + 1e-9) + 1e-12:
            return False, None

    def neg(lam):
        return -_min_eig(robust_matrix(a, b, c, d, inst.k, gamma, lam))

    if lam_hi == 0.0:
        lam, best = 0.0, -neg(0.0)
    else:
        lam, val = minimize_1d(neg, 0.0, lam_hi, tol=tol)
        best = -val
        for end in (0.0, lam_hi):
            v = -neg(end)
            if v > best:
                lam, best = end, v
    if best >= -PSD_TOL:
        return True, lam
    return False, None


def robust_eig_profile(inst, lams):
    """Smallest LMI eigenvalue at each multiplier in ``lams``."""
    a, b, c, d = standardize_quad(inst)
    gamma = chi_inv(a.size, 1.0 - inst.eps)
    return np.array([_min_eig(robust_matrix(a, b, c, d, inst.k, gamma, lam)) for lam in lams])


# -- CVaR --------------------------------------------------------------------

def _upper_sq(m, s, r):
    """``E[V^2 1{V > r}]`` for ``V ~ N(m, s^2)`` (arrays)."""
    a = (r - m) / s
    pa = INV_SQRT_2PI * np.exp(-0.5 * a * a)
    qa = ndtr(-a)
    return m * m * qa + 2.0 * m * s * pa + s * s * (a * pa + qa), qa


def _lower_sq(m, s, r):
    """``E[V^2 1{V < -r}]`` for ``V ~ N(m, s^2)`` (arrays)."""
    b = (-r - m) / s
    pb = INV_SQRT_2PI * np.exp(-0.5 * b * b)
    cb = ndtr(b)
    return m * m * cb - 2.0 * m * s * pb + s * s * (cb - b * pb), cb


def _excess_inner(m1, s1, c):
    """``E[(V^2 - c)^+]`` for ``V ~ N(m1, s1^2)``, vectorized in ``c``."""
    c = np.asarray(c, dtype=float)
    out = np.empty_like(c)
    neg = c <= 0
    out[neg] = m1 * m1 + s1 * s1 - c[neg]
    pos = ~neg
    if np.any(pos):
        cp = c[pos]
        if s1 == 0.0:
            out[pos] = np.maximum(m1 * m1 - cp, 0.0)
        else:
            r = np.sqrt(cp)
            up, pu = _upper_sq(m1, s1, r)
            lo, pl = _lower_sq(m1, s1, r)
            out[pos] = np.maximum(up + lo - cp * (pu + pl), 0.0)
    return out


def expected_excess(inst, s, tol=1e-8, reduced=None):
    """``E[max(q - s, 0)]`` with ``q = (a'xi + b)^2 + (c'xi + d)^2``."""
    red = reduced if reduced is not None else reduce_to_2d(inst).principal()
    m, sd = red
    m0, m1 = float(m[0]), float(m[1])
    s0, s1 = float(sd[0]), float(sd[1])
    if s0 == 0.0:
        return float(_excess_inner(m1, s1, np.array([s - m0 * m0]))[0])

    def f(z):
        u = m0 + s0 * z
        return INV_SQRT_2PI * np.exp(-0.5 * z * z) * _excess_inner(m1, s1, s - u * u)

    breaks = []
    if s > 0:
        for u in (-math.sqrt(s), math.sqrt(s)):
            z = (u - m0) / s0
            if -GAUSS_TRUNCATION < z < GAUSS_TRUNCATION:
                breaks.append(z)
    value = integrate_1d(f, -GAUSS_TRUNCATION, GAUSS_TRUNCATION,
                            QuadratureSpec(abs_tol=tol), breakpoints=sorted(breaks))
    return max(value, 0.0)


def cvar_objective(inst, alpha, tol=1e-8, reduced=None):
    """``h(alpha) = E[max(q - k + alpha, 0)] - alpha eps``."""
    return expected_excess(inst, inst.k - alpha, tol, reduced) - alpha * inst.eps


def cvar_feasible(inst, tol=1e-8, log_range=(-12.0, 12.0), prune=True, method="golden"):
    """Convex CVaR approximation ``inf_alpha h(alpha) <= 0``.

    ``method="golden"`` runs golden section on ``log alpha`` (``h`` is convex
    in ``alpha``, hence unimodal in ``log alpha``) and stops as soon as a
    probe certifies feasibility. ``method="quantile"`` uses the optimality
    condition ``P(q > k - alpha) = eps``: the minimizer is
    ``alpha = k - v`` with ``v`` the ``1 - eps`` quantile of ``q``, found by
    root bracketing on the exact distribution function.

    Two implied tests run first when ``prune`` is set: ``E[q] > k`` and an
    exact probability below ``1 - eps`` both rule the point out (the
    approximation is conservative).

    Returns
    -------
    feasible : bool
    alpha : float or None
        A certifying ``alpha`` when feasible.
    """
    if method not in ("golden", "quantile"):
        raise DomainError(f"unknown method {method!r}")
    if inst.k < 0:
        return False, None
    red = reduce_to_2d(inst)
    reduced = red.principal()
    mean_q = float(red.mean2 @ red.mean2 + np.trace(red.cov2))
    if mean_q == 0.0:
        return True, 1.0
    level = 1.0 - inst.eps
    if prune or method == "quantile":
        if mean_q > inst.k:
            return False, None
        if _disk_mass(reduced[0], reduced[1], inst.k, 1e-10) < level - 1e-9:
            return False, None
    if method == "quantile":
        return _cvar_by_quantile(inst, reduced, level, tol)

    def h(t):
        return cvar_objective(inst, math.exp(t), tol, reduced)

    lo, hi = log_range
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = h(c), h(d)
    while True:
        if min(fc, fd) <= CVAR_TOL:
            return True, math.exp(c if fc <= fd else d)
        if hi - lo <= 1e-7:
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = h(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = h(d)
    for end in log_range:
        if h(end) <= CVAR_TOL:
            return True, math.exp(end)
    return False, None


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _cvar_by_quantile(inst, reduced, level, tol):
    m, sd = reduced

    def cdf_gap(s):
        return _disk_mass(m, sd, s, 1e-11) - level

    k = inst.k
    if cdf_gap(0.0) >= 0.0:
        v = 0.0
    else:
        v = brentq(cdf_gap, 0.0, k, xtol=1e-13 * max(1.0, k), rtol=1e-14)
    alpha = k - v
    if not alpha > 0.0:
        return False, None
    value = cvar_objective(inst, alpha, tol, reduced)
    return value <= CVAR_TOL, (alpha if value <= CVAR_TOL else None)


def cvar_monte_carlo(inst, alpha, n=10 ** 6, seed=0x5EED):
    """Monte Carlo estimate of ``h(alpha)``, used to cross-check quadrature."""
    rng = np.random.default_rng(seed)
    xi = inst.dist.sample(rng, n)
    q = (xi @ inst.a + inst.b) ** 2 + (xi @ inst.c + inst.d) ** 2
    return float(np.mean(np.maximum(q - inst.k + alpha, 0.0)) - alpha * inst.eps)


# -- grid comparison ---------------------------------------------------------

GRID_HEADER = ("x", "y", "true_prob", "exact", "two_sided", "robust", "cvar")


def compare_grid(eps, n=100, lo=0.0, hi=1.2, beta=0.5, tol=1e-7, cvar_method="quantile"):
    """Evaluate the example family on an ``n x n`` grid over ``[lo, hi]^2``.

    Rows run with ``y`` outermost and ``x`` innermost.
    """
    eps = as_eps(eps, relaxed=True)
    ticks = np.linspace(lo, hi, n)
    rows = []
    for y in ticks:
        for x in ticks:
            inst = example_instance(float(x), float(y), eps)
            p = true_prob(inst, tol)
            rows.append((float(x), float(y), p, p >= 1.0 - eps,
                         two_sided_feasible(inst, beta)[0], robust_feasible(inst)[0],
                         cvar_feasible(inst, method=cvar_method)[0]))
    return rows


def grid_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_HEADER)
    for x, y, p, *flags in rows:
        w.writerow([repr(x), repr(y), repr(p)] + [int(f) for f in flags])
    return buf.getvalue()


def exact_contour(eps, n_angles=91, r_max=5.0, tol=1e-7):
    """Points with ``true_prob = 1 - eps`` on rays from the origin in the first quadrant."""
    eps = as_eps(eps, relaxed=True)
    out = []
    for th in np.linspace(0.0, 0.5 * math.pi, n_angles):
        cx, cy = math.cos(th), math.sin(th)

        def g(r):
            # probability deficit, nondecreasing in r
            return (1.0 - eps) - true_prob(example_instance(r * cx, r * cy, eps), tol)

        r = bisect_root(g, 0.0, r_max, tol=1e-10) if g(r_max) > 0 else math.inf
        out.append((float(th), r * cx, r * cy))
    return out


def ball_radius(eps):
    """Closed-form two-sided region of the example family for ``beta = 1/2``."""
    return 1.0 / -float(Phi_inv(eps / 4.0))


def box_half_width(eps, n=2):
    """Closed-form robust region of the example family."""
    return 1.0 / chi_inv(n, 1.0 - eps)


# -- univariate quadratic and mixed deterministic forms -----------------------

def univariate_quad_interval(b, d, k):
    """``[l, u]`` with ``(t + b)^2 + (t + d)^2 <= k`` iff ``l <= t <= u``; ``None`` if empty."""
    disc = 2.0 * k - (d - b) ** 2
    if disc < 0:
        return None
    root = math.sqrt(disc)
    return 0.5 * (-(d + b) - root), 0.5 * (-(d + b) + root)


def _cone_test(lower, upper, x, dist, eps):
    x = np.asarray(x, dtype=float)
    m = float(dist.mean @ x)
    sd = float(np.linalg.norm(dist.chol.T @ x))
    return cone_contains((lower - m, upper - m, sd), eps)


def univariate_quad_feasible(x, b, d, k, dist, eps):
    """``P((x'xi + b)^2 + (x'xi + d)^2 <= k) >= 1 - eps`` via the conic hull."""
    eps = as_eps(eps)
    iv = univariate_quad_interval(b, d, k)
    if iv is None:
        return False
    return _cone_test(iv[0], iv[1], x, dist, eps)


def deterministic_mixed_feasible(x, b, z, k, dist, eps):
    """``P((x'xi + b)^2 + z^2 <= k) >= 1 - eps`` as a two-sided constraint."""
    eps = as_eps(eps)
    if k < z * z:
        return False
    r = math.sqrt(k - z * z)
    return _cone_test(-r - b, r - b, x, dist, eps)
