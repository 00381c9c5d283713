"""Scalar Gaussian special functions and 1-D numerical kernels.

Everything here is pure and accepts either Python floats or numpy arrays
where noted. The rest of the package builds on:

* :func:`phi`, :func:`Phi`, :func:`Phi_inv` -- standard normal density,
  distribution function and quantile.
* :func:`chi_cdf`, :func:`chi_inv` -- the chi distribution (norm of a
  standard Gaussian vector).
* :func:`integrate_1d` -- vectorized adaptive Gauss-Kronrod quadrature.
* :func:`minimize_1d` -- golden-section search with optional Newton polish.
* :func:`bisect_root` -- bracketing root finder for monotone functions.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConvergenceError, DomainError, QuadratureError

SQRT_2PI = math.sqrt(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / SQRT_2PI
# Gaussian tail mass beyond |x| = 9 is ~2e-19.
GAUSS_TRUNCATION = 9.0


def phi(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def Phi(x):
    """Standard normal distribution function.

    Backed by ``scipy.special.ndtr``, which evaluates through ``erfc`` in the
    tails and is accurate to a few ulps; ``Phi(-inf) == 0`` and
    ``Phi(inf) == 1``.
    """
    out = special.ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def log_Phi(x):
    out = special.log_ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def interval_mass(lo, hi):
    """``Phi(hi) - Phi(lo)`` without cancellation when both lie in one tail.

    Negative differences (``hi < lo``) are returned as-is; callers clamp.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    upper_tail = lo > 0
    # In the upper tail use 1 - Phi(t) = Phi(-t).
    with np.errstate(invalid="ignore"):
        out = np.where(upper_tail, special.ndtr(-lo) - special.ndtr(-hi),
                       special.ndtr(hi) - special.ndtr(lo))
        # Narrow intervals: the difference cancels, integrate the density instead.
        w = hi - lo
        narrow = np.isfinite(w) & (np.abs(w) * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi))) <= 1.0)
    if np.any(narrow):
        c = 0.5 * (lo + hi)
        half = 0.5 * w
        nodes = c[..., None] + half[..., None] * _GL_X
        quad = half * (INV_SQRT_2PI * np.exp(-0.5 * nodes * nodes) @ _GL_W)
        out = np.where(narrow, quad, out)
    return float(out) if out.ndim == 0 else out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


# Acklam's rational approximation, relative error ~1e-9 before refinement.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549671010165458e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _acklam_lower(p):
    """Initial quantile guess for ``p`` in (0, 1/2]."""
    x = np.empty_like(p)
    tail = p < _P_LOW
    if np.any(tail):
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[tail] = num / den
    mid = ~tail
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    return x


def Phi_inv(p):
    """Standard normal quantile.

    A rational initial guess is refined by Halley steps in probability
    space, using ``d/dp Phi_inv(p) = sqrt(2 pi) exp(Phi_inv(p)**2 / 2)``.
    Work is always done on the smaller tail ``min(p, 1 - p)`` so that the
    residual is measured relative to that tail's mass.

    Raises
    ------
    DomainError
        If any ``p`` lies outside the open interval (0, 1).
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise DomainError(f"Phi_inv requires 0 < p < 1, got {p!r}")
    flat = np.atleast_1d(p_arr).ravel()
    upper = flat > 0.5
    # 1 - p is exact for p in [1/2, 1] (Sterbenz).
    tail = np.where(upper, 1.0 - flat, flat)
    x = _acklam_lower(tail)
    for _ in range(4):
        with np.errstate(over="ignore", invalid="ignore"):
            err = special.ndtr(x) - tail
            u = err * SQRT_2PI * np.exp(0.5 * x * x)
            step = u / (1.0 + 0.5 * x * u)
        step = np.where(np.isfinite(step), step, 0.0)
        x = x - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(x))):
            break
    x = np.where(upper, -x, x)
    x = x.reshape(p_arr.shape)
    return float(x) if x.ndim == 0 else x


def dPhi_inv(p):
    """First derivative of the quantile, ``sqrt(2 pi) exp(q**2 / 2)``."""
    q = Phi_inv(p)
    return SQRT_2PI * np.exp(0.5 * q * q)


def d2Phi_inv(p):
    """Second derivative of the quantile, ``2 pi q exp(q**2)``."""
    q = Phi_inv(p)
    return 2.0 * math.pi * q * np.exp(q * q)


def chi_cdf(dof, x):
    """Distribution function of the chi law with ``dof`` degrees of freedom.

    For two degrees of freedom this is ``1 - exp(-x**2 / 2)`` exactly; in
    general it is the regularized lower incomplete gamma function
    ``P(dof / 2, x**2 / 2)``.
    """
    if int(dof) != dof or dof < 1:
        raise DomainError(f"dof must be a positive integer, got {dof!r}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("chi_cdf requires x >= 0")
    if dof == 2:
        out = -np.expm1(-0.5 * x * x)
    else:
        out = special.gammainc(0.5 * dof, 0.5 * x * x)
    return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=256)
def chi_inv(dof, p, tol=1e-14):
    """Quantile of the chi law, found by bisection on :func:`chi_cdf`."""
    if int(dof) != dof or dof < 1:
        raise DomainError(f"dof must be a positive integer, got {dof!r}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"chi_inv requires 0 < p < 1, got {p!r}")
    hi = 1.0
    while chi_cdf(dof, hi) < p:
        hi *= 2.0
    return bisect_root(lambda r: chi_cdf(dof, r) - p, 0.0, hi, tol=tol)


def bisect_root(f, lo, hi, tol=1e-12, max_iter=400):
    """Root of a nondecreasing ``f`` on ``[lo, hi]`` by bisection.

    Stops when the bracket is narrower than ``tol * max(1, |mid|)`` or
    cannot shrink further in floating point. Requires
    ``f(lo) <= 0 <= f(hi)``.
    """
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise DomainError(f"root not bracketed: f({lo})={flo}, f({hi})={fhi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)) or mid in (lo, hi):
            return mid
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError("bisect_root: iteration cap reached")


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-9
    max_depth: int = 60

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError("abs_tol must be positive")
        if self.max_depth < 1:
            raise DomainError("max_depth must be >= 1")


# 7-point Gauss / 15-point Kronrod nodes on [-1, 1].
_XK = np.array([
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245, 0.405845151377397166906606412076961,
    0.586087235467691130294144845693013, 0.741531185599394439863864773280788,
    0.864864423359769072789712788640926, 0.949107912342758524526189684047851,
    0.991455371120812639206854697526329])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970])
_WG = np.zeros(15)
_WG[1::2] = [0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
             0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
             0.381830050505118944950369775488975, 0.279705391489276667901467771423780,
             0.129484966168869693270611432679082]


def integrate_1d(f, lo, hi, spec=QuadratureSpec(), breakpoints=()):
    """Adaptive Gauss-Kronrod (G7/K15) quadrature of ``f`` over ``[lo, hi]``.

    ``f`` must accept a 1-D numpy array of abscissae and return an array of
    the same shape; all panels of one refinement level are evaluated in a
    single call. A panel is accepted once its Kronrod-Gauss difference is
    below its width-proportional share of ``spec.abs_tol``.

    Infinite limits are truncated at ``|x| = 9``, which is only appropriate
    for Gaussian-weighted integrands. Interior ``breakpoints`` (kinks,
    square-root singularities) become panel boundaries.

    Raises
    ------
    QuadratureError
        If panels still fail the error test after ``spec.max_depth`` levels,
        or more than ``MAX_PANELS`` remain unresolved at one level.
    """
    lo = max(float(lo), -GAUSS_TRUNCATION) if math.isinf(lo) else float(lo)
    hi = min(float(hi), GAUSS_TRUNCATION) if math.isinf(hi) else float(hi)
    if hi <= lo:
        return 0.0
    cuts = sorted({lo, hi, *(float(b) for b in breakpoints if lo < b < hi)})
    a = np.array(cuts[:-1])
    b = np.array(cuts[1:])
    total_width = hi - lo
    result = 0.0
    err_total = 0.0
    for _depth in range(spec.max_depth):
        center = 0.5 * (a + b)
        half = 0.5 * (b - a)
        nodes = center[:, None] + half[:, None] * _XK[None, :]
        vals = np.asarray(f(nodes.ravel()), dtype=float).reshape(nodes.shape)
        kron = half * (vals @ _WK)
        gauss = half * (vals @ _WG)
        err = np.abs(kron - gauss)
        ok = err <= spec.abs_tol * (b - a) / total_width
        # Panels that can no longer be split in floating point are accepted.
        ok |= (b - a) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(center))
        result += float(np.sum(kron[ok]))
        err_total += float(np.sum(err[ok]))
        if np.all(ok):
            return result
        a, b = a[~ok], b[~ok]
        if a.size > MAX_PANELS:
            break
        mid = 0.5 * (a + b)
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
    raise QuadratureError(
        f"integrate_1d: {a.size} panels unresolved at depth {_depth + 1}",
        estimate=result, error=err_total)


MAX_PANELS = 1 << 16

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def minimize_1d(h, lo, hi, tol=1e-10, dh=None, d2h=None, max_iter=500):
    """Minimize a strictly convex ``h`` on the open interval ``(lo, hi)``.

    Golden-section search narrows the bracket to width ``tol`` (scaled down
    for brackets narrower than 1) without ever evaluating the endpoints, so ``h`` may
    diverge there. When ``dh`` and ``d2h`` are given, safeguarded Newton
    steps on ``dh`` then polish the minimizer below the resolution that
    function-value comparisons allow.

    Returns
    -------
    (argmin, minimum)
    """
    a, b = float(lo), float(hi)
    if not b > a:
        raise DomainError(f"empty interval ({lo}, {hi})")
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = h(c), h(d)
    # Absolute tolerance, tightened for brackets narrower than 1.
    width_tol = tol * min(1.0, b - a)
    scale = max(abs(a), abs(b), 1e-300)
    for _ in range(max_iter):
        if b - a <= width_tol or b - a <= 4 * np.finfo(float).eps * scale:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = h(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = h(d)
        scale = max(abs(a), abs(b), 1e-300)
    else:
        raise ConvergenceError("minimize_1d: golden-section iteration cap reached")
    x, fx = (c, fc) if fc <= fd else (d, fd)
    if dh is not None and d2h is not None:
        g = dh(x)
        for _ in range(30):
            curv = d2h(x)
            if not (curv > 0 and math.isfinite(curv) and math.isfinite(g)):
                break
            x_new = x - g / curv
            if not lo < x_new < hi:
                break
            g_new = dh(x_new)
            if not (math.isfinite(g_new) and abs(g_new) < abs(g)):
                break
            x, g = x_new, g_new
            if abs(g) == 0.0:
                break
        fx = h(x)
    return x, fx
