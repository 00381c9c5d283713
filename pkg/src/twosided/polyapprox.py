"""Polyhedral outer approximations of the two-sided Gaussian set.

Three families are built here, all bounded by tangent lines of ``S(eps)``:

* ``A(eps)``: the two axis cuts ``x <= Phi_inv(eps)``,
  ``y >= Phi_inv(1 - eps)``. Equivalent to splitting the two-sided
  constraint into two one-sided ones; loses up to a factor 2 in ``eps``.
* ``B(eps)``: ``A(eps)`` plus the symmetric tangent ``x - y <= 2 Phi_inv(eps/2)``,
  which caps the loss at a factor 1.25.
* tangent families with ``n`` cuts at evenly spaced boundary parameters.

A family ``P`` is an alpha-approximation when every point of ``P(eps)``
still captures mass ``1 - alpha * eps``. Because the recession cone of
``S(eps)`` is spanned by ``(-1, 0)`` and ``(0, 1)``, it suffices to check the
vertices (:func:`certify_alpha`). Evaluating a family at ``eps / alpha``
yields an inner (conservative) approximation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .gauss import Phi, Phi_inv, SQRT_2PI
from .seps import Halfplane2, Point2, as_eps, support, tangent_cut

RECESSION_RAYS = ((-1.0, 0.0), (0.0, 1.0))


@dataclass(frozen=True)
class Polyhedron2:
    """Planar polyhedron ``{p : a1 * x + a2 * y <= rhs for every cut}``.

    Vertices and extreme rays are derived from the cuts on construction.
    """

    cuts: tuple
    vertices: tuple = field(init=False)
    rays: tuple = field(init=False)
    eps: float | None = None

    def __post_init__(self):
        cuts = tuple(Halfplane2(*c) for c in self.cuts)
        object.__setattr__(self, "cuts", cuts)
        object.__setattr__(self, "vertices", _enumerate_vertices(cuts))
        object.__setattr__(self, "rays", _extreme_rays(cuts))

    def contains(self, p, tol=1e-10):
        return all(c.violation(p) <= tol * max(1.0, abs(c.rhs)) for c in self.cuts)


def _enumerate_vertices(cuts, tol=1e-9):
    verts = []
    for c1, c2 in itertools.combinations(cuts, 2):
        det = c1.a1 * c2.a2 - c1.a2 * c2.a1
        if abs(det) < 1e-14:
            continue
        x = (c1.rhs * c2.a2 - c1.a2 * c2.rhs) / det
        y = (c1.a1 * c2.rhs - c1.rhs * c2.a1) / det
        scale = max(1.0, abs(x), abs(y))
        if any(c.violation((x, y)) > tol * scale for c in cuts):
            continue
        if any(abs(x - vx) <= tol * scale and abs(y - vy) <= tol * scale
               for vx, vy in verts):
            continue
        verts.append(Point2(x, y))
    return tuple(sorted(verts))


def _extreme_rays(cuts, tol=1e-12):
    """Extreme rays of ``{d : a . d <= 0}`` as unit vectors."""
    rays = []
    for c in cuts:
        norm = math.hypot(c.a1, c.a2)
        for sign in (1.0, -1.0):
            d = (-sign * c.a2 / norm, sign * c.a1 / norm)
            if any(k.a1 * d[0] + k.a2 * d[1] > tol for k in cuts):
                continue
            d = (round(d[0], 12) + 0.0, round(d[1], 12) + 0.0)
            if d not in rays:
                rays.append(d)
    return tuple(sorted(rays))


@dataclass(frozen=True)
class AlphaCertificate:
    alpha: float
    worst_vertex: Point2
    worst_mass_deficit: float
    eps: float

    def as_dict(self):
        return {"eps": self.eps, "alpha": self.alpha,
                "worst_vertex": list(self.worst_vertex),
                "worst_mass_deficit": self.worst_mass_deficit}


def build_A(eps):
    eps = as_eps(eps)
    return Polyhedron2((tangent_cut(1.0, eps), tangent_cut(0.0, eps)), eps=eps)


def build_B(eps):
    eps = as_eps(eps)
    diag = Halfplane2(1.0, -1.0, 2.0 * Phi_inv(eps / 2.0))
    return Polyhedron2((tangent_cut(1.0, eps), tangent_cut(0.0, eps), diag), eps=eps)


def build_tangent(eps, n_cuts):
    """Tangent cuts at ``lam = i / (n_cuts - 1)``, the two ends being the axis cuts.

    ``n_cuts = 2`` reproduces ``A(eps)`` and ``n_cuts = 3`` reproduces ``B(eps)``.
    """
    eps = as_eps(eps)
    if n_cuts < 2:
        raise DomainError("a tangent family needs at least the two axis cuts")
    lams = np.linspace(0.0, 1.0, n_cuts)
    return Polyhedron2(tuple(tangent_cut(float(lam), eps) for lam in lams), eps=eps)


def build_family(name, eps, n_cuts=None):
    if name == "A":
        return build_A(eps)
    if name == "B":
        return build_B(eps)
    if name == "tangent":
        return build_tangent(eps, n_cuts)
    raise DomainError(f"unknown family {name!r}")


def uncaptured_mass(p):
    """``1 - (Phi(y) - Phi(x))`` as the sum of both tail masses."""
    x, y = p
    return min(1.0, Phi(x) + Phi(-y))


def certify_alpha(poly, eps, valid_tol=1e-9):
    """Approximation factor of ``poly`` as an outer approximation of ``S(eps)``.

    Checks that every cut is valid (support value does not exceed its
    right-hand side) and that the extreme rays are exactly ``(-1, 0)`` and
    ``(0, 1)``; the factor is then the worst uncaptured mass over the
    vertices, divided by ``eps``.

    Raises
    ------
    DomainError
        If the rays differ (no finite factor exists) or a cut is invalid.
    """
    eps = as_eps(eps)
    if poly.rays != tuple(sorted(RECESSION_RAYS)):
        raise DomainError(
            f"extreme rays {poly.rays} differ from (-1, 0), (0, 1); no finite factor")
    for cut in poly.cuts:
        value, _ = support(cut.a1, cut.a2, eps)
        if value > cut.rhs + valid_tol * max(1.0, abs(cut.rhs)):
            raise DomainError(f"cut {cut} cuts into S(eps): support {value}")
    if not poly.vertices:
        raise DomainError("polyhedron has no vertices")
    deficits = [uncaptured_mass(v) for v in poly.vertices]
    k = int(np.argmax(deficits))
    return AlphaCertificate(deficits[k] / eps, poly.vertices[k], deficits[k], eps)


def build_conservative(eps, alpha=1.25, family="B", n_cuts=None):
    """The family evaluated at ``eps / alpha``, an inner approximation when
    ``alpha`` is at least the family's certified factor."""
    eps = as_eps(eps)
    if alpha < 1.0:
        raise DomainError("alpha must be >= 1")
    return build_family(family, eps / alpha, n_cuts)


def certificates_report(eps_grid, families=("A", "B"), n_cuts=()):
    """JSON-ready certificates for each family and ``eps``."""
    out = []
    for eps in eps_grid:
        entry = {"eps": float(eps)}
        for name in families:
            entry[name] = certify_alpha(build_family(name, eps), eps).as_dict()
        for n in n_cuts:
            entry[f"tangent_{n}"] = certify_alpha(build_tangent(eps, n), eps).as_dict()
        out.append(entry)
    return out


@dataclass
class TailLemmaReport:
    eps_grid_size: int
    tail2_violations: list
    bound4_violations: list
    fprime_half: float
    limit_eps: float
    limit_value: float
    limit_target: float
    limit_trend: dict

    @property
    def tail2_ok(self):
        return not self.tail2_violations

    @property
    def bound4_ok(self):
        return not self.bound4_violations

    def as_dict(self):
        d = dict(self.__dict__)
        d["tail2_ok"] = self.tail2_ok
        d["bound4_ok"] = self.bound4_ok
        return d


def tail_gap(eps):
    """``Phi_inv(1 - eps/2) - Phi_inv(1 - eps)``, increasing on (0, 1/2]."""
    return Phi_inv(eps) - Phi_inv(eps / 2.0)


def tail_gap_derivative(eps):
    q_half = Phi_inv(eps / 2.0)
    q = Phi_inv(eps)
    return -0.5 * SQRT_2PI * math.exp(0.5 * q_half ** 2) + SQRT_2PI * math.exp(0.5 * q ** 2)


def squared_quantile_gap(eps):
    """``Phi_inv(1 - eps/2)**2 - Phi_inv(1 - eps)**2``; tends to ``2 log 2`` as eps -> 0."""
    return Phi_inv(eps / 2.0) ** 2 - Phi_inv(eps) ** 2


def verify_tail_lemmas(eps_grid, limit_eps=1e-6):
    """Check both quantile-tail inequalities behind the 1.25 factor on a grid.

    ``tail2``: ``tail_gap(eps) >= tail_gap(eps / 2)``.
    ``bound4``: ``Phi_inv(eps) - 2 Phi_inv(eps/2) >= Phi_inv(1 - eps/4)``.
    Also records ``tail_gap'(1/2)`` and the squared-gap value at
    ``limit_eps``, with a few smaller ``eps`` to show the trend.
    """
    tail2_bad, bound4_bad = [], []
    for eps in eps_grid:
        eps = as_eps(float(eps))
        if tail_gap(eps) < tail_gap(eps / 2.0):
            tail2_bad.append(eps)
        if Phi_inv(eps) - 2.0 * Phi_inv(eps / 2.0) < -Phi_inv(eps / 4.0):
            bound4_bad.append(eps)
    trend = {f"{e:.0e}": squared_quantile_gap(e) for e in (1e-6, 1e-12, 1e-50, 1e-300)}
    return TailLemmaReport(
        eps_grid_size=len(eps_grid), tail2_violations=tail2_bad,
        bound4_violations=bound4_bad, fprime_half=tail_gap_derivative(0.5),
        limit_eps=limit_eps, limit_value=squared_quantile_gap(limit_eps),
        limit_target=2.0 * math.log(2.0), limit_trend=trend)
