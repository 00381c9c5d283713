import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twosided import opf
from twosided.errors import DomainError, SchemaError
from twosided.formulation import (AffineExpr, ChanceProblem, GaussianVector, LinearConstraint,
                                  OneSidedCC, TwoSidedCC, build_soc, cc_probability, cholesky,
                                  combine, dumps, emit_json, emit_problem, parse_formulation,
                                  parse_problem, smooth_constraints, standardize)
from twosided.gauss import Phi, Phi_inv, interval_mass

X = AffineExpr


def random_spd(rng, n):
    M = rng.standard_normal((n, n))
    return M @ M.T + 0.5 * np.eye(n)


def e1_problem(eps=0.1):
    cc = TwoSidedCC(X.var("a"), X.var("b"), (X.const(1.0),), GaussianVector.standard(1), eps)
    return ChanceProblem(("a", "b"), X(), (), (cc,))


def test_affine_algebra():
    e = 2.0 * X.var("x") - X.var("y") + 3.0
    assert e.evaluate({"x": 1.0, "y": 4.0}) == 1.0
    assert (5.0 - e).evaluate({"x": 1.0, "y": 4.0}) == 4.0
    assert (-e).constant == -3.0
    np.testing.assert_array_equal(e.gradient(("y", "x", "z")), [-1.0, 2.0, 0.0])
    assert combine([1.0, -1.0], [e, e]).evaluate({"x": 7.0, "y": 2.0}) == 0.0


def test_affine_rejects_nonfinite():
    with pytest.raises(DomainError):
        X({"x": math.inf})


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_cholesky_reconstructs(n):
    S = random_spd(np.random.default_rng(n), n)
    L = cholesky(S)
    assert np.allclose(np.triu(L, 1), 0.0)
    assert np.all(np.diag(L) > 0)
    assert np.max(np.abs(L @ L.T - S)) <= 1e-10 * np.max(np.abs(S))


def test_cholesky_rejects_singular():
    with pytest.raises(DomainError):
        cholesky(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(DomainError):
        GaussianVector(np.zeros(2), [[1.0, 2.0], [0.0, 1.0]])


def test_gaussian_dimension_zero():
    g = GaussianVector(np.zeros(0), np.zeros((0, 0)))
    assert g.dim == 0 and g.chol.shape == (0, 0)


def test_gaussian_sample_moments():
    rng = np.random.default_rng(0)
    S = random_spd(rng, 3)
    g = GaussianVector([1.0, -2.0, 0.5], S)
    xs = g.sample(np.random.default_rng(1), 200000)
    assert np.allclose(xs.mean(axis=0), g.mean, atol=5 * np.sqrt(np.diag(S).max() / 200000))
    assert np.allclose(np.cov(xs.T), S, rtol=0.03, atol=0.03)


def test_standardize_identity_and_shift():
    a, b, y = standardize(e1_problem().ccs[0])
    assert a == X.var("a") and b == X.var("b")
    assert [e.constant for e in y] == [1.0]
    cc = TwoSidedCC(X.var("a"), X.var("b"), (X.const(1.0), X.const(0.0)),
                    GaussianVector([1.0, 0.0], np.eye(2)), 0.1)
    a, b, _ = standardize(cc)
    assert a.constant == -1.0 and b.constant == -1.0


@given(st.integers(0, 10 ** 6))
def test_standardize_preserves_norm_and_probability(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    S = random_spd(rng, n)
    mu = rng.standard_normal(n)
    x = rng.standard_normal(n)
    cc = TwoSidedCC(X.var("a"), X.var("b"), tuple(X.const(v) for v in x),
                    GaussianVector(mu, S), 0.2)
    a, b, y = standardize(cc)
    ys = np.array([e.constant for e in y])
    sd = math.sqrt(x @ S @ x)
    assert np.linalg.norm(ys) == pytest.approx(sd, rel=1e-10)
    point = {"a": float(rng.normal()), "b": float(rng.normal() + 2.0)}
    direct = interval_mass((point["a"] - mu @ x) / sd, (point["b"] - mu @ x) / sd)
    assert cc_probability(cc, point) == pytest.approx(direct, abs=1e-10)


def test_problem_rejects_unknown_variables():
    with pytest.raises(DomainError):
        ChanceProblem(("a",), X.var("b"))
    with pytest.raises(DomainError):
        ChanceProblem(("a", "a"))


def test_cc_dimension_checked():
    with pytest.raises(DomainError):
        TwoSidedCC(X(), X(), (X.const(1.0),), GaussianVector.standard(2), 0.1)


def test_build_soc_rows_for_single_cc():
    f = build_soc(e1_problem(0.1))
    assert len(f.soc) == 1 and len(f.linear) == 3
    assert f.variables == ("a", "b", "t_cc0")
    assert f.bounds["t_cc0"] == (0.0, math.inf)
    # rows: a <= q t, b >= -q t, a - b <= 2 Phi_inv(eps / 2) t
    t = 1.0
    q = Phi_inv(0.1)
    ok = {"a": q * t, "b": (q - 2.0 * Phi_inv(0.05)) * t, "t_cc0": t}
    assert all(r.residual(ok) <= 1e-12 for r in f.linear) and f.soc[0].residual(ok) <= 0
    bad = {"a": q * t + 1e-6, "b": 10.0, "t_cc0": t}
    assert f.linear[0].residual(bad) > 0
    diag = {"a": -1.5, "b": 1.5, "t_cc0": 1.0}  # inside both axis cuts, outside the diagonal one
    assert f.linear[2].residual(diag) > 0
    assert f.soc[0].residual({"a": 0.0, "b": 0.0, "t_cc0": 0.5}) > 0


def test_build_soc_conservative_and_domain():
    f = build_soc(e1_problem(0.5), "conservative")
    assert f.linear[0].expr.coeffs["t_cc0"] == pytest.approx(-Phi_inv(0.4))
    with pytest.raises(DomainError):
        build_soc(e1_problem(0.6))
    with pytest.raises(DomainError):
        build_soc(e1_problem(), "inner")


def test_build_soc_one_sided():
    os_ = OneSidedCC(X.var("b"), (X.const(2.0),), GaussianVector.standard(1), 0.05)
    f = build_soc(ChanceProblem(("b",), X.var("b"), one_sided=(os_,)))
    assert len(f.soc) == 1 and len(f.linear) == 1
    z = -Phi_inv(0.05)
    assert f.linear[0].residual({"b": 2.0 * z, "t_os0": 2.0}) <= 1e-12


@given(st.floats(0.01, 0.5), st.floats(-4, 4), st.floats(-4, 4))
def test_sandwich_property(eps, a, b):
    f_out = build_soc(e1_problem(eps))
    f_con = build_soc(e1_problem(eps), "conservative")
    pt = {"a": a, "b": b, "t_cc0": 1.0}
    prob = max(0.0, interval_mass(a, b))
    feas_out = all(r.residual(pt) <= 1e-12 for r in f_out.linear)
    feas_con = all(r.residual(pt) <= 1e-12 for r in f_con.linear)
    if prob >= 1 - eps:
        assert feas_out
    if feas_out:
        assert prob >= 1 - 1.25 * eps - 1e-12
    if feas_con:
        assert prob >= 1 - eps - 1e-12


def test_smooth_value_in_iid_case():
    (g,) = smooth_constraints(e1_problem(0.1))
    v, grad = g(np.array([-1.5, 2.0]))
    assert v == pytest.approx(Phi(2.0) - Phi(-1.5) - 0.9, abs=1e-15)
    assert grad.shape == (2,)


@given(st.integers(0, 10 ** 6))
def test_smooth_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n = 3
    S = random_spd(rng, n)
    cc = TwoSidedCC(X.var("a") + X.var("x0"), X.var("b"),
                    tuple(X({"x0": float(rng.normal()), "x1": float(rng.normal())}, float(rng.normal()))
                          for _ in range(n)),
                    GaussianVector(rng.standard_normal(n), S), 0.2)
    p = ChanceProblem(("a", "b", "x0", "x1"), X(), (), (cc,))
    for form in ("plain", "log"):
        (g,) = smooth_constraints(p, form)
        v = np.array([-2.0, 3.0, 0.3, -0.2]) + 0.1 * rng.standard_normal(4)
        v[1] += abs(v[0]) + 5.0
        try:
            _, grad = g(v)
        except DomainError:
            continue
        fd = np.empty(4)
        for i in range(4):
            h = 1e-6 * max(1.0, abs(v[i]))
            e = np.zeros(4)
            e[i] = h
            fd[i] = (g(v + e)[0] - g(v - e)[0]) / (2 * h)
        assert np.max(np.abs(fd - grad)) <= 1e-5 * max(1.0, np.max(np.abs(grad)))


def test_smooth_signals_vanishing_scale():
    cc = TwoSidedCC(X.var("a"), X.var("b"), (X.var("x"),), GaussianVector.standard(1), 0.1)
    (g,) = smooth_constraints(ChanceProblem(("a", "b", "x"), X(), (), (cc,)))
    with pytest.raises(DomainError):
        g(np.array([-1.0, 1.0, 1e-14]))


def test_smooth_plain_rejects_large_eps():
    with pytest.raises(DomainError):
        smooth_constraints(e1_problem(0.7), "plain")
    assert smooth_constraints(e1_problem(0.7), "log")


def test_json_empty_problem():
    p = ChanceProblem(())
    f = build_soc(p)
    doc = emit_json(f)
    assert doc["soc"] == [] and doc["linear"] == [] and doc["variables"] == []
    assert parse_formulation(dumps(doc)) == f


def test_json_single_cc_counts_and_round_trip():
    p = e1_problem(0.05)
    doc = emit_json(build_soc(p))
    assert len(doc["soc"]) == 1 and len(doc["linear"]) == 3
    assert parse_formulation(json.loads(dumps(doc))) == build_soc(p)
    assert parse_problem(dumps(emit_problem(p))) == p


@pytest.mark.parametrize("fixture", opf.FIXTURES)
@pytest.mark.parametrize("mode", opf.MODES)
def test_json_round_trip_opf_problem(fixture, mode):
    p = opf.build_cc_opf(opf.load_fixture(fixture), 0.05, mode)
    assert parse_problem(dumps(emit_problem(p))) == p
    f = build_soc(p)
    assert parse_formulation(dumps(emit_json(f))) == f


def test_json_preserves_floats_exactly():
    v = 0.1 + 0.2
    p = ChanceProblem(("x",), X({"x": v}, 1 / 3))
    assert parse_problem(dumps(emit_problem(p))).objective.coeffs["x"] == v


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d["ccs"][0].update(eps=1.5), "ccs/0/eps"),
    (lambda d: d["ccs"][0].pop("mean"), "ccs/0"),
    (lambda d: d["linear"].append({"coeffs": {}, "sense": "<", "rhs": 0}), "linear/0/sense"),
    (lambda d: d["ccs"][0].update(cov=[[1.0, 0.0]]), "ccs/0/cov"),
])
def test_json_errors_carry_path(mutate, path):
    doc = emit_problem(e1_problem())
    mutate(doc)
    with pytest.raises(SchemaError) as info:
        parse_problem(doc)
    assert info.value.path == path


def test_json_unknown_variable_is_schema_error():
    doc = emit_problem(e1_problem())
    doc["objective"] = {"coeffs": {"zz": 1.0}, "const": 0.0}
    with pytest.raises(SchemaError):
        parse_problem(doc)


def test_dumps_is_deterministic():
    p = opf.build_cc_opf(opf.load_fixture("five_bus"), 0.05)
    assert dumps(emit_problem(p)) == dumps(emit_problem(parse_problem(dumps(emit_problem(p)))))


def test_linear_constraint_residual():
    c = LinearConstraint(X.var("x"), ">=", 2.0)
    assert c.residual({"x": 1.0}) == 1.0 and c.residual({"x": 3.0}) == -1.0
    with pytest.raises(DomainError):
        LinearConstraint(X.var("x"), "<", 0.0)
