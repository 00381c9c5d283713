import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twosided.distrobust import (CovFamily, MeanBox, robust_feasible, robust_separate,
                                 soc_gradient_cut, worst_mean, worst_sigma, worst_sigma_member)
from twosided.errors import DomainError
from twosided.gauss import Phi, interval_mass
from twosided.seps import cone_contains


def random_spd(rng, n, scale=1.0):
    M = rng.standard_normal((n, n))
    return scale * (M @ M.T / n + 0.2 * np.eye(n))


def random_instance(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 5))
    c = rng.standard_normal(n)
    r = rng.uniform(0.0, 0.5, n)
    box = MeanBox(c - r, c + r)
    fam = CovFamily(tuple(random_spd(rng, n, rng.uniform(0.5, 2.0)) for _ in range(int(rng.integers(1, 4)))))
    x = rng.standard_normal(n)
    return rng, box, fam, x


def mass(a, b, m, s):
    return interval_mass((a - m) / s, (b - m) / s)


def test_meanbox_validation():
    with pytest.raises(DomainError):
        MeanBox([1.0], [0.0])
    with pytest.raises(DomainError):
        MeanBox([0.0, 0.0], [1.0])


def test_covfamily_validation():
    with pytest.raises(DomainError):
        CovFamily(())
    with pytest.raises(DomainError):
        CovFamily(([[1.0, 0.0], [0.0, -1.0]],))
    with pytest.raises(DomainError):
        CovFamily(([[1.0, 0.5], [0.0, 1.0]],))
    with pytest.raises(DomainError):
        CovFamily((np.eye(2), np.eye(3)))


def test_worst_mean_trivial():
    box = MeanBox(-np.ones(3), np.ones(3))
    assert worst_mean([1.0, 0.0, 0.0], box) == (-1.0, 1.0)
    assert worst_mean(np.zeros(3), box) == (0.0, 0.0)
    with pytest.raises(DomainError):
        worst_mean([1.0, 0.0], box)


@pytest.mark.parametrize("n", [1, 3, 6, 10])
def test_worst_mean_matches_corner_enumeration(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        lo = rng.standard_normal(n)
        hi = lo + rng.uniform(0, 2, n)
        x = rng.standard_normal(n)
        vals = [float(np.where(np.array(s), hi, lo) @ x) for s in itertools.product((0, 1), repeat=n)]
        got = worst_mean(x, MeanBox(lo, hi))
        assert got[0] == pytest.approx(min(vals), abs=1e-12)
        assert got[1] == pytest.approx(max(vals), abs=1e-12)


def test_worst_sigma_trivial():
    x = np.array([1.0, -2.0])
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert worst_sigma(x, CovFamily((S,))) == pytest.approx(x @ S @ x)
    assert worst_sigma(x, CovFamily((np.eye(2), 2 * np.eye(2)))) == pytest.approx(2 * x @ x)
    assert worst_sigma_member(x, CovFamily((np.eye(2), 2 * np.eye(2))))[0] == 1


@given(st.integers(0, 10 ** 6))
def test_worst_sigma_dominates_members(seed):
    _, _, fam, x = random_instance(seed)
    w = worst_sigma(x, fam)
    assert all(w >= x @ m @ x - 1e-12 for m in fam.members)
    assert any(w == pytest.approx(x @ m @ x) for m in fam.members)


def test_singleton_set_matches_plain_membership():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = 2
        mu = rng.standard_normal(n)
        S = random_spd(rng, n)
        x = rng.standard_normal(n)
        a, b = sorted(rng.normal(0, 3, 2))
        eps = float(rng.uniform(0.01, 0.5))
        s = math.sqrt(x @ S @ x)
        m = mu @ x
        plain = mass(a, b, m, s) >= 1 - eps
        if abs(mass(a, b, m, s) - (1 - eps)) < 1e-9:
            continue
        assert robust_feasible(a, b, x, eps, MeanBox(mu, mu), CovFamily((S,))) == plain


def test_symmetric_box_symmetric_interval():
    box = MeanBox([-0.3], [0.3])
    fam = CovFamily(([[1.0]],))
    lo, hi = worst_mean([1.0], box)
    assert mass(-2.5, 2.5, lo, 1.0) == pytest.approx(mass(-2.5, 2.5, hi, 1.0), abs=1e-15)
    assert robust_feasible(-2.5, 2.5, [1.0], 0.05, box, fam)
    assert not robust_feasible(-2.0, 2.0, [1.0], 0.05, box, fam)


@given(st.integers(0, 10 ** 6))
def test_feasible_implies_every_sampled_law_satisfies(seed):
    rng, box, fam, x = random_instance(seed)
    eps = float(rng.uniform(0.01, 0.5))
    m_lo, m_hi = worst_mean(x, box)
    s = math.sqrt(worst_sigma(x, fam))
    centre = 0.5 * (m_lo + m_hi)
    half = 0.5 * (m_hi - m_lo) + s * float(rng.uniform(1.5, 3.5))
    a, b = centre - half, centre + half + float(rng.normal(0, 0.3))
    if not robust_feasible(a, b, x, eps, box, fam):
        return
    for _ in range(50):
        mu = rng.uniform(box.lo, box.hi)
        S = fam.members[int(rng.integers(len(fam.members)))]
        t = math.sqrt(x @ S @ x)
        m = mu @ x
        assert Phi((b - m) / t) - Phi((a - m) / t) >= 1 - eps - 1e-10


@given(st.integers(0, 10 ** 6))
def test_matches_grid_minimization(seed):
    rng, box, fam, x = random_instance(seed, n=2)
    eps = float(rng.uniform(0.01, 0.5))
    m_lo, m_hi = worst_mean(x, box)
    a, b = m_lo - float(rng.uniform(0.5, 5)), m_hi + float(rng.uniform(0.5, 5))
    worst = min(mass(a, b, m, math.sqrt(x @ S @ x))
                for m in np.linspace(m_lo, m_hi, 401) for S in fam.members)
    if abs(worst - (1 - eps)) < 1e-8:
        return
    assert robust_feasible(a, b, x, eps, box, fam) == (worst >= 1 - eps)


@given(st.integers(0, 10 ** 6))
def test_endpoint_rule_against_dense_grid(seed):
    rng = np.random.default_rng(seed)
    a, b = sorted(rng.normal(0, 3, 2))
    s = float(rng.uniform(0.2, 3))
    m_lo = float(rng.normal())
    m_hi = m_lo + float(rng.uniform(0, 3))
    grid = min(mass(a, b, m, s) for m in np.linspace(m_lo, m_hi, 2001))
    ends = min(mass(a, b, m_lo, s), mass(a, b, m_hi, s))
    assert ends <= grid + 1e-10


@given(st.integers(0, 10 ** 6))
def test_monotone_in_uncertainty_set(seed):
    rng, box, fam, x = random_instance(seed)
    eps = float(rng.uniform(0.01, 0.5))
    a, b = sorted(rng.normal(0, 4, 2))
    big_box = MeanBox(box.lo - 0.1, box.hi + 0.2)
    big_fam = CovFamily(fam.members + (random_spd(rng, x.size),))
    if not robust_feasible(a, b, x, eps, box, fam):
        assert not robust_feasible(a, b, x, eps, big_box, fam)
        assert not robust_feasible(a, b, x, eps, box, big_fam)


def test_separate_variance_only_gives_soc_cut():
    fam = CovFamily((np.eye(2), np.diag([4.0, 1.0])))
    box = MeanBox(np.zeros(2), np.zeros(2))
    x = np.array([1.0, 0.0])
    cut = robust_separate(-10.0, 10.0, x, 0.05, box, fam, t=1.0)
    assert cut.kind == "soc" and cut.member == 1
    assert cut.value(-10.0, 10.0, x, 1.0) > 0
    # valid: every (x, t) with t >= sqrt(x' S x) for the argmax member is kept
    rng = np.random.default_rng(0)
    for _ in range(200):
        y = rng.standard_normal(2)
        t = math.sqrt(y @ fam.members[1] @ y)
        assert cut.value(0.0, 0.0, y, t) <= 1e-12


def test_separate_mean_shift_gives_cone_cut_at_worst_endpoint():
    fam = CovFamily((np.eye(1),))
    box = MeanBox([0.0], [1.5])
    x = np.array([1.0])
    a, b = -2.2, 2.2
    assert cone_contains((a, b, 1.0), 0.05)
    cut = robust_separate(a, b, x, 0.05, box, fam)
    assert cut.kind == "cone"
    assert cut.mean[0] == 1.5
    assert cut.value(a, b, x, 1.0) > 0


@given(st.integers(0, 10 ** 6))
def test_cone_cuts_never_remove_robust_feasible_points(seed):
    rng, box, fam, x = random_instance(seed)
    eps = float(rng.uniform(0.01, 0.5))
    a, b = sorted(rng.normal(0, 2, 2))
    if robust_feasible(a, b, x, eps, box, fam):
        with pytest.raises(DomainError):
            robust_separate(a, b, x, eps, box, fam)
        return
    cut = robust_separate(a, b, x, eps, box, fam)
    assert cut.value(a, b, x, math.sqrt(worst_sigma(x, fam))) > 0
    for _ in range(100):
        y = rng.standard_normal(x.size)
        t = math.sqrt(worst_sigma(y, fam)) * float(rng.uniform(1.0, 2.0))
        m_lo, m_hi = worst_mean(y, box)
        lo = m_lo - float(rng.uniform(0, 6)) * t
        hi = m_hi + float(rng.uniform(0, 6)) * t
        if all(cone_contains((lo - m, hi - m, t), eps) for m in (m_lo, m_hi)):
            assert cut.value(lo, hi, y, t) <= 1e-9 * max(1.0, abs(lo), abs(hi), t)


def test_soc_gradient_cut_at_zero():
    g, ct = soc_gradient_cut(np.zeros(3), np.eye(3))
    assert np.all(g == 0) and ct == -1.0
