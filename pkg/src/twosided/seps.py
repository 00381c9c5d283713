"""Exact oracles for the two-sided Gaussian set and its conic hull.

``S(eps) = {(x, y) : Phi(y) - Phi(x) >= 1 - eps}`` collects the interval
endpoints that capture at least ``1 - eps`` standard normal mass. Its conic
hull ``cone(eps)`` is the closure of ``{(x, y, z) : z > 0, (x/z, y/z) in S}``;
a constraint ``P(a <= x'xi <= b) >= 1 - eps`` with ``xi ~ N(0, I)`` holds iff
``(a, b, ||x||)`` lies in the cone.

The boundary of ``S`` is the curve

    lam -> (Phi_inv(lam * eps), Phi_inv(1 - (1 - lam) * eps)),  0 < lam < 1,

and every oracle here (support function, projection, tangent cuts) reduces
to a one-dimensional search along it. Internally the curve is traversed in
``s = logit(lam)`` so that both tail masses ``lam * eps`` and
``(1 - lam) * eps`` are formed without cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DomainError
from .gauss import Phi, Phi_inv, interval_mass, log_Phi, minimize_1d, phi

# logit range searched along the boundary; expit(-600) ~ 3e-261.
_S_MAX = 600.0


@dataclass(frozen=True)
class RiskLevel:
    """Violation budget ``eps``.

    The default constructor enforces ``0 < eps <= 1/2``, which the conic
    hull results need. ``RiskLevel.relaxed(eps)`` admits ``0 < eps < 1`` for
    the plane-level boundary and membership operations.
    """

    eps: float
    allow_above_half: bool = False

    def __post_init__(self):
        eps = self.eps
        if not (isinstance(eps, (int, float)) and math.isfinite(eps)):
            raise DomainError(f"eps must be a finite real, got {eps!r}")
        upper_ok = eps < 1.0 if self.allow_above_half else eps <= 0.5
        if not (eps > 0.0 and upper_ok):
            bound = "(0, 1)" if self.allow_above_half else "(0, 1/2]"
            raise DomainError(f"eps must lie in {bound}, got {eps!r}")

    @classmethod
    def relaxed(cls, eps):
        return cls(float(eps), allow_above_half=True)


def as_eps(eps, relaxed=False):
    """Validate ``eps`` (float or :class:`RiskLevel`) and return it as float."""
    if isinstance(eps, RiskLevel):
        if eps.allow_above_half and not relaxed and eps.eps > 0.5:
            raise DomainError(f"this operation needs eps <= 1/2, got {eps.eps}")
        return eps.eps
    level = RiskLevel.relaxed(eps) if relaxed else RiskLevel(float(eps))
    return level.eps


class Point2(NamedTuple):
    x: float
    y: float


class ConePoint3(NamedTuple):
    x: float
    y: float
    z: float


class Halfplane2(NamedTuple):
    """The halfplane ``a1 * x + a2 * y <= rhs``."""

    a1: float
    a2: float
    rhs: float

    def violation(self, p):
        return self.a1 * p[0] + self.a2 * p[1] - self.rhs


class HalfSpace3(NamedTuple):
    """The homogeneous halfspace ``a1 * x + a2 * y + a3 * z <= 0``."""

    a1: float
    a2: float
    a3: float

    def violation(self, q):
        return self.a1 * q[0] + self.a2 * q[1] + self.a3 * q[2]


# -- boundary parameterization ---------------------------------------------

def _expit_pair(s):
    """``(lam, 1 - lam)`` for ``lam = expit(s)``, each to full precision."""
    return special.expit(s), special.expit(-s)


def _boundary_s(s, eps):
    """Boundary point at ``s = logit(lam)``."""
    lam, one_minus = _expit_pair(s)
    return lam, one_minus, Phi_inv(lam * eps), -Phi_inv(one_minus * eps)


def _boundary_derivs(x, y, eps):
    """First and second ``lam``-derivatives of the boundary coordinates.

    Non-finite values far out on the curve are left for the caller to reject.
    """
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        px, py = np.float64(phi(x)), np.float64(phi(y))
        dx, dy = eps / px, eps / py
        # d2/dp2 Phi_inv(p) = Phi_inv(p) / phi(Phi_inv(p))**2
        d2x = eps * eps * x / (px * px)
        d2y = eps * eps * y / (py * py)
    return dx, dy, d2x, d2y


def boundary_point(lam, eps):
    """Point of the boundary of ``S(eps)`` with lower tail mass ``lam * eps``.

    ``lam = 0`` and ``lam = 1`` return the limiting points
    ``(-inf, Phi_inv(1 - eps))`` and ``(Phi_inv(eps), inf)``.
    """
    eps = as_eps(eps, relaxed=True)
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lam must lie in [0, 1], got {lam!r}")
    if lam == 0.0:
        return Point2(-math.inf, -Phi_inv(eps))
    if lam == 1.0:
        return Point2(Phi_inv(eps), math.inf)
    return Point2(Phi_inv(lam * eps), -Phi_inv((1.0 - lam) * eps))


def boundary_param(p, eps):
    """Inverse of :func:`boundary_point`: ``lam = Phi(x) / eps``."""
    eps = as_eps(eps, relaxed=True)
    return Phi(p[0]) / eps


def mass(p):
    """Standard normal mass of the interval ``[x, y]``, clamped to [0, 1]."""
    return min(1.0, max(0.0, interval_mass(p[0], p[1])))


def contains(p, eps, tol=0.0):
    """Membership in ``S(eps)``: ``mass(p) >= 1 - eps - tol``.

    The comparison is exact for ``tol = 0``; boundary points computed in
    floating point may need a small explicit ``tol``.
    """
    eps = as_eps(eps, relaxed=True)
    return mass(p) >= 1.0 - eps - tol


def cone_contains(q, eps, tol=0.0):
    """Membership in the closed conic hull of ``S(eps)``.

    ``z > 0`` rescales to the plane; ``z = 0`` requires ``x <= 0 <= y``;
    ``z < 0`` is never a member.
    """
    eps = as_eps(eps)
    x, y, z = q
    if z > 0:
        return contains((x / z, y / z), eps, tol)
    if z == 0:
        return x <= 0.0 <= y
    return False


def monotone_dominates(q1, q2):
    """True iff ``q2`` is at least as hard as ``q1`` coordinatewise.

    For ``eps <= 1/2`` membership of ``q2`` then implies membership of ``q1``
    (provided ``q1.z >= 0``): the interval only widens and the scale only
    shrinks.
    """
    return q2[0] >= q1[0] and q2[1] <= q1[1] and q2[2] >= q1[2]


def linear_boundary_curvature(a, b, lam, eps):
    """Second derivative in ``lam`` of ``a * x(lam) + b * y(lam)``.

    Positive whenever ``a < 0 < b``, which makes minimizing a linear function
    along the boundary a strictly convex problem.
    """
    eps = as_eps(eps, relaxed=True)
    x = Phi_inv(lam * eps)
    y = -Phi_inv((1.0 - lam) * eps)
    two_pi = 2.0 * math.pi
    return (two_pi * a * eps ** 2 * x * math.exp(x * x)
            + two_pi * b * eps ** 2 * y * math.exp(y * y))


# -- support function and projection ---------------------------------------

def _s_derivatives(lam, one_minus, h_lam, h_lamlam):
    """Chain rule from ``lam`` to ``s = logit(lam)``."""
    w = lam * one_minus
    return h_lam * w, h_lamlam * w * w + h_lam * w * (one_minus - lam)


def support(a1, a2, eps):
    """Support function ``max {a1 * x + a2 * y : (x, y) in S(eps)}``.

    Returns ``(value, maximizer)``. The maximizer is ``None`` when the value
    is infinite or the supremum is approached only along a ray (axis
    directions).
    """
    eps = as_eps(eps)
    if a1 == 0.0 and a2 == 0.0:
        raise DomainError("support direction must be nonzero")
    if a1 < 0.0 or a2 > 0.0:
        return math.inf, None
    if a1 == 0.0:
        return a2 * -Phi_inv(eps), None
    if a2 == 0.0:
        return a1 * Phi_inv(eps), None

    def h(s):
        _, _, x, y = _boundary_s(s, eps)
        return -(a1 * x + a2 * y)

    def derivs(s):
        lam, om, x, y = _boundary_s(s, eps)
        dx, dy, d2x, d2y = _boundary_derivs(x, y, eps)
        with np.errstate(over="ignore", invalid="ignore"):
            return _s_derivatives(lam, om, -(a1 * dx + a2 * dy),
                                  -(a1 * d2x + a2 * d2y))

    s_opt, h_opt = minimize_1d(h, -_S_MAX, _S_MAX, tol=1e-10,
                               dh=lambda s: derivs(s)[0], d2h=lambda s: derivs(s)[1])
    lam, om = _expit_pair(s_opt)
    point = Point2(Phi_inv(lam * eps), -Phi_inv(om * eps))
    return -h_opt, point


class Projection(NamedTuple):
    point: Point2
    lam: float


def project(p, eps):
    """Euclidean projection of ``p`` (outside ``S(eps)``) onto ``S(eps)``.

    The search runs over the boundary arc between the axis-parallel
    projections, ``Phi(y)`` fixed on one side and ``Phi(x)`` on the other,
    where the squared distance is strictly convex in ``lam``.
    """
    eps = as_eps(eps, relaxed=True)
    px, py = float(p[0]), float(p[1])
    if contains((px, py), eps):
        raise DomainError(f"point {p!r} already lies in S(eps)")
    log_eps = math.log(eps)
    # upper end: lam < Phi(px) / eps
    log_hi = log_Phi(px) - log_eps
    s_hi = _S_MAX if log_hi >= 0 else log_hi - math.log(-math.expm1(log_hi))
    # lower end: 1 - lam < Phi(-py) / eps
    log_om = log_Phi(-py) - log_eps
    s_lo = -_S_MAX if log_om >= 0 else math.log(-math.expm1(log_om)) - log_om
    # beyond the representable arc the projection sits on an axis asymptote
    if s_hi <= -_S_MAX:
        return Projection(Point2(px, -Phi_inv(eps)), 0.0)
    if s_lo >= _S_MAX:
        return Projection(Point2(Phi_inv(eps), py), 1.0)
    s_lo, s_hi = max(s_lo, -_S_MAX), min(s_hi, _S_MAX)

    def h(s):
        _, _, x, y = _boundary_s(s, eps)
        return 0.5 * ((x - px) ** 2 + (y - py) ** 2)

    def derivs(s):
        lam, om, x, y = _boundary_s(s, eps)
        dx, dy, d2x, d2y = _boundary_derivs(x, y, eps)
        ex, ey = x - px, y - py
        with np.errstate(over="ignore", invalid="ignore"):
            return _s_derivatives(lam, om, ex * dx + ey * dy,
                                  dx * dx + ex * d2x + dy * dy + ey * d2y)

    s_opt, _ = minimize_1d(h, s_lo, s_hi, tol=1e-12,
                           dh=lambda s: derivs(s)[0], d2h=lambda s: derivs(s)[1])
    lam, om = _expit_pair(s_opt)
    point = Point2(Phi_inv(lam * eps), -Phi_inv(om * eps))
    return Projection(point, float(lam))


def _normal_direction(x, y):
    """Outward normal ``(phi(x), -phi(y))`` scaled to max-abs 1, in log space."""
    r = 0.5 * (y * y - x * x)  # log(phi(x) / phi(y))
    if r >= 0:
        return 1.0, -math.exp(-r)
    return math.exp(r), -1.0


# -- separation ------------------------------------------------------------

def separate_gradient(p, eps):
    """Linearization cut of ``1 - eps - Phi(y) + Phi(x) <= 0`` at ``p``.

    The constraint function is convex on the quadrant ``x <= 0 <= y``,
    which contains the set, so the linearization at a point of that
    quadrant is valid, though generally not tangent. Outside the quadrant
    the linearization can cut into the set; there the axis cut
    ``x <= Phi_inv(eps)`` (or ``y >= Phi_inv(1 - eps)``) is returned, which
    the point violates. Scaled so that the larger coefficient has
    magnitude 1.
    """
    eps = as_eps(eps)
    px, py = float(p[0]), float(p[1])
    if contains((px, py), eps):
        raise DomainError(f"point {p!r} already lies in S(eps)")
    if px > 0.0:
        return Halfplane2(1.0, 0.0, Phi_inv(eps))
    if py < 0.0:
        return Halfplane2(0.0, -1.0, Phi_inv(eps))
    f = 1.0 - eps - (Phi(py) - Phi(px))
    scale = max(phi(px), phi(py))
    if scale == 0.0:
        raise DomainError(f"gradient vanishes numerically at {p!r}")
    a1, a2 = _normal_direction(px, py)
    return Halfplane2(a1, a2, a1 * px + a2 * py - f / scale)


def tangent_cut(lam, eps):
    """Halfplane tangent to ``S(eps)`` at ``boundary_point(lam, eps)``.

    ``lam = 0`` and ``lam = 1`` give the axis cuts ``y >= Phi_inv(1 - eps)``
    and ``x <= Phi_inv(eps)``.
    """
    eps = as_eps(eps, relaxed=True)
    if lam == 0.0:
        return Halfplane2(0.0, -1.0, Phi_inv(eps))
    if lam == 1.0:
        return Halfplane2(1.0, 0.0, Phi_inv(eps))
    x, y = boundary_point(lam, eps)
    a1, a2 = _normal_direction(x, y)
    return Halfplane2(a1, a2, a1 * x + a2 * y)


def separate_tangent(p, eps):
    """Tight cut: the tangent halfplane at the projection of ``p``.

    The normal is taken from the boundary gradient at the projected point,
    which is parallel to ``p - proj`` at the exact projection and keeps the
    cut tangent even when the projection carries rounding error.
    """
    eps = as_eps(eps)
    proj, _ = project(p, eps)
    a1, a2 = _normal_direction(proj.x, proj.y)
    return Halfplane2(a1, a2, a1 * proj.x + a2 * proj.y)


def cone_separate(q, eps):
    """Homogeneous cut separating ``q`` from the conic hull of ``S(eps)``.

    ``z > 0`` lifts the tangent cut of ``(x/z, y/z)``; ``z = 0`` returns
    ``x <= 0`` or ``-y <= 0``; ``z < 0`` returns ``-z <= 0``.
    """
    eps = as_eps(eps)
    x, y, z = (float(v) for v in q)
    if z < 0:
        return HalfSpace3(0.0, 0.0, -1.0)
    if cone_contains((x, y, z), eps):
        raise DomainError(f"point {q!r} already lies in the conic hull")
    if z == 0:
        if x > 0:
            return HalfSpace3(1.0, 0.0, 0.0)
        return HalfSpace3(0.0, -1.0, 0.0)
    cut = separate_tangent((x / z, y / z), eps)
    return HalfSpace3(cut.a1, cut.a2, -cut.rhs)


# -- smooth representations ------------------------------------------------

def smooth_value_grad(q, eps, form="plain"):
    """Concave constraint function for the conic hull and its gradient.

    ``plain``: ``z * (Phi(y/z) - Phi(x/z) - (1 - eps))``, concave on the set
    for ``eps <= 1/2``.
    ``log``: ``z * (log(Phi(y/z) - Phi(x/z)) - log(1 - eps))``, the
    perspective of the log-concave interval mass; valid for ``eps < 1``.

    Membership holds iff the value is ``>= 0`` (and ``z >= 0``).

    Returns
    -------
    value : float
    grad : ndarray, shape (3,)
        Derivatives with respect to ``(x, y, z)``.
    """
    x, y, z = (float(v) for v in q)
    if not z > 0:
        raise DomainError(f"smooth representation needs z > 0, got z={z!r}")
    u, v = x / z, y / z
    fu, fv = phi(u), phi(v)
    m = interval_mass(u, v)
    if form == "plain":
        eps = as_eps(eps)
        value = z * (m - (1.0 - eps))
        grad = np.array([-fu, fv, m - (1.0 - eps) + fu * u - fv * v])
    elif form == "log":
        eps = as_eps(eps, relaxed=True)
        if not m > 0:
            raise DomainError("log form needs Phi(y/z) > Phi(x/z)")
        log_gap = math.log(m) - math.log1p(-eps)
        value = z * log_gap
        grad = np.array([-fu / m, fv / m, log_gap + (fu * u - fv * v) / m])
    else:
        raise DomainError(f"unknown form {form!r}")
    return value, grad

