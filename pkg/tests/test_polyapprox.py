import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twosided import polyapprox as pa
from twosided import seps
from twosided.errors import DomainError
from twosided.gauss import Phi, Phi_inv

GRID = (1e-4, 1e-3, 0.01, 0.05, 0.1, 0.25, 0.5)


def brute_alpha(poly, eps, n=401, span=6.0):
    """Largest uncaptured mass over a grid of points inside ``poly``, over eps."""
    vx = [v.x for v in poly.vertices]
    vy = [v.y for v in poly.vertices]
    xs = np.union1d(np.linspace(min(vx) - span, max(vx), n), vx)
    ys = np.union1d(np.linspace(min(vy), max(vy) + span, n), vy)
    X, Y = np.meshgrid(xs, ys)
    inside = np.ones_like(X, dtype=bool)
    for c in poly.cuts:
        inside &= c.a1 * X + c.a2 * Y <= c.rhs + 1e-12 * max(1.0, abs(c.rhs))
    miss = Phi(X[inside]) + Phi(-Y[inside])
    return float(miss.max()) / eps


@pytest.mark.parametrize("eps", GRID)
def test_A_vertex_and_factor(eps):
    A = pa.build_A(eps)
    assert A.vertices == ((Phi_inv(eps), -Phi_inv(eps)),)
    assert seps.mass(A.vertices[0]) == pytest.approx(1 - 2 * eps, abs=1e-12)
    cert = pa.certify_alpha(A, eps)
    assert cert.alpha <= 2 + 1e-9
    assert cert.alpha == pytest.approx(2.0, abs=1e-9)


def test_A_at_half_has_origin_vertex():
    assert pa.build_A(0.5).vertices == ((0.0, 0.0),)


@pytest.mark.parametrize("eps", GRID)
def test_B_vertices_symmetric_and_certified(eps):
    B = pa.build_B(eps)
    assert len(B.vertices) == 2
    (x1, y1), (x2, y2) = B.vertices
    assert x1 == pytest.approx(-y2, abs=1e-12) and y1 == pytest.approx(-x2, abs=1e-12)
    assert x1 == pytest.approx(2 * Phi_inv(eps / 2) - Phi_inv(eps), abs=1e-12)
    cert = pa.certify_alpha(B, eps)
    assert cert.alpha <= 1.25 + 1e-9
    assert cert.alpha == pytest.approx(brute_alpha(B, eps), rel=1e-9)


def test_B_at_half_vertex_mass():
    B = pa.build_B(0.5)
    v = [v for v in B.vertices if v.x == 0.0 or abs(v.x) < 1e-15][0]
    assert v.y == pytest.approx(-2 * Phi_inv(0.25), abs=1e-12)
    assert seps.mass(v) == pytest.approx(Phi(-2 * Phi_inv(0.25)) - 0.5, abs=1e-15)
    assert seps.mass(v) == pytest.approx(0.41133, abs=1e-5)
    assert seps.mass(v) >= 1 - 1.25 * 0.5


def test_B_factor_is_nearly_tight():
    assert max(pa.certify_alpha(pa.build_B(e), e).alpha for e in GRID) >= 1.20


@pytest.mark.parametrize("eps", [0.01, 0.05, 0.3])
def test_tangent_families_reduce_to_A_and_B(eps):
    t2, t3 = pa.build_tangent(eps, 2), pa.build_tangent(eps, 3)
    np.testing.assert_allclose(t2.vertices, pa.build_A(eps).vertices, atol=1e-12)
    np.testing.assert_allclose(t3.vertices, pa.build_B(eps).vertices, atol=1e-9)


def test_tangent_needs_two_cuts():
    with pytest.raises(DomainError):
        pa.build_tangent(0.1, 1)


@pytest.mark.parametrize("eps", [0.01, 0.05, 0.5])
def test_tangent_alpha_nonincreasing(eps):
    alphas = [pa.certify_alpha(pa.build_tangent(eps, n), eps).alpha for n in (2, 3, 5, 9, 17, 33)]
    assert all(b <= a + 1e-12 for a, b in zip(alphas, alphas[1:]))
    assert alphas[-1] < 1.02


def test_nine_tangent_cuts_certify():
    assert pa.certify_alpha(pa.build_tangent(0.05, 9), 0.05).alpha <= 1.25


@pytest.mark.parametrize("family,n", [("A", None), ("B", None), ("tangent", 4), ("tangent", 9)])
@pytest.mark.parametrize("eps", [1e-3, 0.05, 0.5])
def test_outer_containment_on_boundary(family, n, eps):
    poly = pa.build_family(family, eps, n)
    for lam in np.linspace(0.0025, 0.9975, 200):
        p = seps.boundary_point(float(lam), eps)
        for c in poly.cuts:
            assert c.violation(p) <= 1e-10 * max(1.0, abs(c.rhs))


@pytest.mark.parametrize("eps", GRID)
def test_conservative_vertices_are_members(eps):
    B = pa.build_conservative(eps, 1.25)
    assert all(seps.mass(v) >= 1 - eps - 1e-15 for v in B.vertices)
    A = pa.build_conservative(eps, 2.0, family="A")
    assert all(seps.mass(v) >= 1 - eps - 1e-15 for v in A.vertices)


def test_conservative_uses_scaled_level():
    assert pa.build_conservative(0.5).vertices == pa.build_B(0.4).vertices
    with pytest.raises(DomainError):
        pa.build_conservative(0.1, alpha=0.5)


def test_certify_rejects_invalid_cut():
    bad = pa.Polyhedron2(pa.build_B(0.1).cuts[:2] + (seps.Halfplane2(1.0, -1.0, -5.0),))
    with pytest.raises(DomainError):
        pa.certify_alpha(bad, 0.1)


def test_certify_rejects_wrong_rays():
    bounded_above = pa.Polyhedron2(pa.build_A(0.1).cuts + (seps.Halfplane2(0.0, 1.0, 50.0),))
    with pytest.raises(DomainError):
        pa.certify_alpha(bounded_above, 0.1)


def test_rays_of_families():
    assert pa.build_B(0.1).rays == tuple(sorted(pa.RECESSION_RAYS))


@given(st.floats(0.01, 0.5), st.floats(-3, 3), st.floats(-3, 3))
def test_polyhedron_contains_agrees_with_cuts(eps, x, y):
    B = pa.build_B(eps)
    assert B.contains((x, y)) == all(c.violation((x, y)) <= 1e-10 * max(1.0, abs(c.rhs))
                                     for c in B.cuts)
    if seps.contains((x, y), eps):
        assert B.contains((x, y))


def test_certificates_report_shape():
    rep = pa.certificates_report((0.05, 0.1), families=("A", "B"), n_cuts=(5,))
    assert [r["eps"] for r in rep] == [0.05, 0.1]
    assert set(rep[0]) == {"eps", "A", "B", "tangent_5"}
    assert rep[0]["B"]["alpha"] <= 1.25


def test_uncaptured_mass_has_no_cancellation():
    assert 1.0 - (Phi(30.0) - Phi(-30.0)) == 0.0
    assert pa.uncaptured_mass((-30.0, 30.0)) == pytest.approx(2 * Phi(-30.0), rel=1e-14)
    assert pa.uncaptured_mass((-30.0, 30.0)) > 0.0


def test_tail_quantities():
    assert pa.tail_gap_derivative(0.5) == pytest.approx(0.93, abs=0.01)
    h = 1e-6
    fd = (pa.tail_gap(0.5 - h) - pa.tail_gap(0.5 - 3 * h)) / (2 * h)
    assert pa.tail_gap_derivative(0.5 - 2 * h) == pytest.approx(fd, rel=1e-5)


def test_tail_lemmas_on_grid():
    rep = pa.verify_tail_lemmas(np.geomspace(1e-10, 0.5, 1000))
    assert rep.tail2_ok and rep.bound4_ok
    assert rep.eps_grid_size == 1000


def test_squared_quantile_gap_approaches_limit_slowly():
    # the value moves toward 2 log 2 as eps shrinks but is still 0.05 away at 1e-6
    vals = [pa.squared_quantile_gap(e) for e in (1e-2, 1e-6, 1e-12, 1e-50, 1e-300)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert all(v < 2 * math.log(2) for v in vals)
    assert 2 * math.log(2) - vals[-1] < 2e-3
    assert pa.squared_quantile_gap(1e-6) == pytest.approx(1.33308, abs=1e-5)


def test_four_bound_at_half():
    eps = 0.5
    assert Phi_inv(eps) - 2 * Phi_inv(eps / 2) >= -Phi_inv(eps / 4)
