"""Two-sided chance constraints that must hold for every Gaussian law in an
uncertainty set ``U = U_mu x U_Sigma``.

``U_mu`` is a box, so ``min`` and ``max`` of ``mu . x`` are closed form.
``U_Sigma`` is a finite family of covariance matrices. The interval mass
``Phi((b - m)/t) - Phi((a - m)/t)`` is log-concave in the shift ``m``, so its
minimum over ``[mu_min, mu_max]`` sits at an endpoint, and the worst
covariance is the one with the largest ``x' Sigma x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .seps import as_eps, cone_contains, cone_separate


@dataclass(frozen=True, eq=False)
class MeanBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DomainError("mean box bounds differ in length")
        if np.any(lo > hi):
            raise DomainError("mean box needs lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def __eq__(self, other):
        return (isinstance(other, MeanBox) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    def extreme_means(self, x):
        """Mean vectors attaining ``min`` and ``max`` of ``mu . x``."""
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.lo, self.hi), np.where(x >= 0, self.hi, self.lo)


@dataclass(frozen=True, eq=False)
class CovFamily:
    members: tuple

    def __post_init__(self):
        mats = tuple(np.atleast_2d(np.asarray(m, dtype=float)) for m in self.members)
        if not mats:
            raise DomainError("covariance family must be nonempty")
        n = mats[0].shape[0]
        for k, m in enumerate(mats):
            if m.shape != (n, n):
                raise DomainError(f"member {k} has shape {m.shape}, expected {(n, n)}")
            if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise DomainError(f"member {k} is not symmetric")
            if n and np.linalg.eigvalsh(m).min() < -1e-10 * max(1.0, np.abs(m).max()):
                raise DomainError(f"member {k} is not positive semidefinite")
        object.__setattr__(self, "members", mats)

    @property
    def dim(self):
        return self.members[0].shape[0]

    def __eq__(self, other):
        return (isinstance(other, CovFamily) and len(self.members) == len(other.members)
                and all(np.array_equal(p, q) for p, q in zip(self.members, other.members)))


def _check_dims(x, Umu=None, Usig=None):
    x = np.asarray(x, dtype=float).reshape(-1)
    if Umu is not None and Umu.dim != x.size:
        raise DomainError(f"mean box has dimension {Umu.dim}, x has {x.size}")
    if Usig is not None and Usig.dim != x.size:
        raise DomainError(f"covariance family has dimension {Usig.dim}, x has {x.size}")
    return x


def worst_mean(x, Umu):
    """``(min, max)`` of ``mu . x`` over the box."""
    x = _check_dims(x, Umu=Umu)
    lo_mu, hi_mu = Umu.extreme_means(x)
    return float(lo_mu @ x), float(hi_mu @ x)


def worst_sigma_member(x, Usig):
    """Index of the member maximizing ``x' Sigma x`` and that maximum."""
    x = _check_dims(x, Usig=Usig)
    forms = [float(x @ m @ x) for m in Usig.members]
    k = int(np.argmax(forms))
    return k, max(forms[k], 0.0)


def worst_sigma(x, Usig):
    return worst_sigma_member(x, Usig)[1]


def robust_feasible(a, b, x, eps, Umu, Usig, tol=0.0):
    """Whether ``P(a <= x' xi <= b) >= 1 - eps`` for every law in ``U``."""
    eps = as_eps(eps)
    t = math.sqrt(worst_sigma(x, Usig))
    return all(cone_contains((a - m, b - m, t), eps, tol=tol)
               for m in worst_mean(x, Umu))


@dataclass(frozen=True, eq=False)
class RobustCut:
    """Valid inequality ``ca * a + cb * b + cx . x + ct * t <= 0``.

    ``kind`` is ``"soc"`` for a cut on ``t >= sqrt(x' Sigma x)`` and
    ``"cone"`` for a lifted cut of the conic hull at a worst-case mean.
    """

    ca: float
    cb: float
    cx: np.ndarray
    ct: float
    kind: str
    mean: np.ndarray | None = None
    member: int | None = None

    def value(self, a, b, x, t):
        return self.ca * a + self.cb * b + float(self.cx @ np.asarray(x, dtype=float)) + self.ct * t


def soc_gradient_cut(x, cov):
    """Cut ``g . x - t <= 0`` supporting ``t >= sqrt(x' cov x)`` at ``x``.

    At ``x = 0`` (or a null direction) the cut reduces to ``-t <= 0``.
    """
    x = np.asarray(x, dtype=float)
    q = float(x @ cov @ x)
    if q <= 0.0:
        return np.zeros_like(x), -1.0
    return cov @ x / math.sqrt(q), -1.0


def robust_separate(a, b, x, eps, Umu, Usig, t=None, tol=0.0):
    """Violated cut for a point that fails the robust constraint.

    With ``t`` given, a point with ``t < sqrt(max x' Sigma x)`` yields the
    norm cut at the maximizing member; otherwise the conic-hull cut at the
    endpoint mean where that cut is most violated, shifted by that mean.
    Without ``t``, ``t = sqrt(max x' Sigma x)`` is used and only cone cuts
    arise.

    Raises
    ------
    DomainError
        If the point is feasible.
    """
    eps = as_eps(eps)
    x = _check_dims(x, Umu, Usig)
    k, ws = worst_sigma_member(x, Usig)
    t_star = math.sqrt(ws)
    if t is not None and t < t_star - tol:
        cx, ct = soc_gradient_cut(x, Usig.members[k])
        return RobustCut(0.0, 0.0, cx, ct, "soc", member=k)
    t_use = t_star if t is None else float(t)
    best = None
    for mu in Umu.extreme_means(x):
        m = float(mu @ x)
        q = (a - m, b - m, t_use)
        if not cone_contains(q, eps, tol=tol):
            c = cone_separate(q, eps)
            viol = c.violation(q)
            if best is None or viol > best[0]:
                best = (viol, c, mu)
    if best is None:
        raise DomainError("point satisfies the robust constraint; nothing to separate")
    _, c, mu = best
    return RobustCut(c.a1, c.a2, -(c.a1 + c.a2) * mu, c.a3, "cone", mean=mu)
