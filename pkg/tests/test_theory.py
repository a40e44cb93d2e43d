import math

import pytest
from hypothesis import given, settings, strategies as st

from conftest import bisect_a_star
from kslab.theory import (ModelParams, a_star, c_kappa, global_existence, hypothesis_H,
                          kappa_admissible, kappa_for_speed, positive_part, speed_constants)


def P(chi=0.5, a=1.0, b=1.0, lam=1.0, mu=1.0):
    return ModelParams(chi=chi, a=a, b=b, lam=lam, mu=mu)


# a=4, lam=0.25, chi*mu=1, b=1.2 is the running example below
STIFF = P(chi=1.0, a=4.0, b=1.2, lam=0.25, mu=1.0)


def test_params_validation():
    for bad in dict(a=0.0), dict(b=-1.0), dict(lam=0.0), dict(mu=-2.0), dict(chi=-0.1):
        with pytest.raises(ValueError):
            P(**bad)
    assert P(chi=0.0).chi_mu == 0.0
    p = P(chi=0.4)
    assert p.replace(b=2.0).b == 2.0 and p.b == 1.0
    assert p.carrying_capacity == 1.0
    assert p.sup_bound == pytest.approx(1.0 / 0.6)
    assert P(chi=1.0).sup_bound == math.inf


def test_positive_part():
    assert positive_part(-1.0) == 0.0
    assert positive_part(0.0) == 0.0
    assert positive_part(2.5) == 2.5


def test_global_existence():
    assert global_existence(P(chi=1.0, b=2.0))
    assert not global_existence(P(chi=1.0, b=1.0))     # strict at equality
    assert global_existence(P(chi=0.4))


def test_hypothesis_H():
    assert hypothesis_H(P(chi=0.5))
    # factor 1 + (2 - 0.5)/(2 (2 + 0.5)) = 1.3
    assert not hypothesis_H(STIFF)
    assert hypothesis_H(STIFF.replace(b=1.5))
    assert hypothesis_H(STIFF.replace(b=1.3))           # non-strict


def test_kappa_admissible():
    for k in (0.1, 0.3, 0.5):      # <= sqrt(lam) = 0.5
        assert kappa_admissible(STIFF, k)
    assert kappa_admissible(STIFF, 1.0)     # (1 - 0.5)/(1.5) = 1/3 <= 0.4
    assert not kappa_admissible(STIFF, 1.5)  # 0.5 > 0.4
    with pytest.raises(ValueError):
        kappa_admissible(STIFF, 0.0)


def test_a_star_examples():
    assert a_star(P(chi=0.5, lam=2.0)) == 1.0
    assert a_star(P(chi=0.5)) == 1.0
    assert a_star(STIFF) == pytest.approx(7.0 / 6.0, abs=1e-12)
    assert a_star(STIFF) == pytest.approx(bisect_a_star(STIFF), abs=1e-12)
    with pytest.raises(ValueError, match="chi\\*mu < b"):
        a_star(P(chi=1.0))


def test_speed_constants_examples():
    sc = speed_constants(P(chi=0.5))
    assert (sc.c0_star, sc.a_star, sc.c_star, sc.c_star_star) == (2.0, 1.0, 2.0, 2.0)
    sc = speed_constants(STIFF)
    assert sc.c_star == pytest.approx(193.0 / 42.0, abs=1e-12)
    assert speed_constants(P(chi=0.1, a=4.0, lam=1.0)).c_star_star == pytest.approx(5.0, abs=1e-12)


def test_c_kappa_examples():
    assert c_kappa(P(), 1.0) == 2.0
    assert c_kappa(P(), 0.5) == 2.5
    assert c_kappa(P(a=4.0), 2.0) == 4.0
    assert kappa_for_speed(P(), 2.5) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        kappa_for_speed(P(), 1.9)


admissible = st.builds(
    lambda chi, a, lam, mu, slack: ModelParams(chi=chi, a=a, b=chi * mu * (1.0 + slack) + 1e-9,
                                               lam=lam, mu=mu),
    chi=st.floats(0.01, 5.0), a=st.floats(0.05, 20.0), lam=st.floats(0.05, 20.0),
    mu=st.floats(0.05, 5.0), slack=st.floats(0.001, 3.0),
)


@settings(max_examples=300, deadline=None)
@given(p=admissible)
def test_a_star_matches_bisection(p):
    assert a_star(p) == pytest.approx(bisect_a_star(p), rel=1e-11)
    assert a_star(p) <= math.sqrt(p.a) * (1 + 1e-15)


@settings(max_examples=300, deadline=None)
@given(p=admissible)
def test_speed_ordering(p):
    sc = speed_constants(p)
    assert sc.c_star >= sc.c0_star * (1 - 1e-14)
    if hypothesis_H(p):
        assert sc.a_star == math.sqrt(p.a)
        assert sc.c_star == pytest.approx(sc.c0_star, rel=1e-14)
    if p.lam >= p.a:
        assert sc.c_star_star == pytest.approx(sc.c0_star, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(p=admissible)
def test_c_star_is_min_over_admissible_grid(p):
    # c_kappa decreases on (0, sqrt a], so its minimum over admissible kappa sits at a*
    sa = math.sqrt(p.a)
    ks = [sa * j / 4000.0 for j in range(1, 4001)]
    best = min(c_kappa(p, k) for k in ks if kappa_admissible(p, k))
    ast = a_star(p)
    assert speed_constants(p).c_star <= best + 1e-9
    # the grid minimizer converges to c* as the grid refines
    assert best - speed_constants(p).c_star <= (p.a / ast ** 2) * sa / 4000.0 + 1e-9


@given(k=st.floats(0.01, 50.0), a=st.floats(0.01, 50.0))
def test_c_kappa_am_gm(k, a):
    p = P(a=a)
    assert c_kappa(p, k) >= 2.0 * math.sqrt(a) * (1 - 1e-14)
    assert c_kappa(p, math.sqrt(a)) == pytest.approx(2.0 * math.sqrt(a), rel=1e-15)
