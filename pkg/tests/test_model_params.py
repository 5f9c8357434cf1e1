import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fastkpp import (
    CRITICAL, FAST_GOOD, SLOW, VERY_FAST, DiffusionParams, ParameterError,
    RegimeError, barenblatt_constants, classify, custom_reaction, d_constants,
    derive_exponents, exponent_bundle, inverse_time_change, kappa, logistic,
    self_similar_exponents, sigma_star, time_change, validate_reaction,
)
from tests.conftest import fast_good


def test_derive_exponents_examples():
    g, gh, reg = derive_exponents(DiffusionParams(0.5, 2, 1))
    assert (g, gh, reg) == (-0.5, 0.5, FAST_GOOD)
    g, gh, reg = derive_exponents(DiffusionParams(1, 2, 1))
    assert g == 0 and reg == SLOW
    g, gh, reg = derive_exponents(DiffusionParams(1 / 3, 2, 3))
    assert gh == pytest.approx(2 / 3) and reg == CRITICAL
    assert classify(DiffusionParams(0.1, 2, 3)) == VERY_FAST


@pytest.mark.parametrize("m,p,N", [(-1, 2, 1), (0, 2, 1), (0.5, 1.0, 1),
                                   (0.5, 2, 0), (0.5, 2, 1.5), (float("nan"), 2, 1)])
def test_invalid_params(m, p, N):
    with pytest.raises(ParameterError):
        DiffusionParams(m, p, N)


@given(st.floats(0.01, 5), st.floats(1.01, 5), st.integers(1, 5))
def test_regime_exhaustive_and_gamma_identity(m, p, N):
    P = DiffusionParams(m, p, N)
    assert P.gamma_hat == -P.gamma or abs(P.gamma_hat + P.gamma) < 1e-15
    assert abs(P.gamma_hat - (1 - m * (p - 1))) < 1e-15
    assert classify(P) in (SLOW, FAST_GOOD, CRITICAL, VERY_FAST)


def test_sigma_star_examples():
    f = logistic()
    assert sigma_star(DiffusionParams(0.5, 2, 1), f) == pytest.approx(0.25, abs=1e-15)
    assert sigma_star(DiffusionParams(0.8, 1.5, 2), f) == pytest.approx(0.4, abs=1e-15)
    assert sigma_star(DiffusionParams(1 / 3, 2, 3), f) == pytest.approx(1 / 3, abs=1e-15)
    with pytest.raises(RegimeError):
        sigma_star(DiffusionParams(1, 2, 1), f)


def test_barenblatt_constants_examples():
    a, k = barenblatt_constants(DiffusionParams(0.5, 2, 1))
    assert a == pytest.approx(2 / 3, rel=1e-14) and k == pytest.approx(1 / 6, rel=1e-14)
    a, k = barenblatt_constants(DiffusionParams(0.8, 1.5, 2))
    assert a == pytest.approx(20 / 3, rel=1e-12) and k == pytest.approx(40 / 9, rel=1e-12)
    # pole at gamma_hat = p/N: gh = 2 - 1e-9 needs m(p-1) = 1 - gh < 0, so use N=2
    p, N = 1.5, 2
    gh = p / N - 1e-9
    a, _ = barenblatt_constants(DiffusionParams((1 - gh) / (p - 1), p, N))
    assert a > 1e8
    with pytest.raises(RegimeError):
        barenblatt_constants(DiffusionParams(1 / 3, 2, 3))


def test_kappa_examples():
    assert kappa(DiffusionParams(0.5, 2, 1)) == pytest.approx(6.0, rel=1e-14)
    assert kappa(DiffusionParams(0.8, 1.5, 2)) == pytest.approx(0.7071, abs=1e-3)
    p, N = 1.5, 2
    gh = p / N - 1e-9
    assert kappa(DiffusionParams((1 - gh) / (p - 1), p, N)) < 1e-7


def test_d_constants_examples():
    d = d_constants(DiffusionParams(0.5, 2, 1))
    assert np.allclose(d, (12, 12, 2), rtol=1e-14)
    d = d_constants(DiffusionParams(0.8, 1.5, 2))
    assert np.allclose(d, (1.25, 4.375, 1.7678), atol=1e-3)


def test_self_similar_exponents_examples():
    assert self_similar_exponents(1, 2) == pytest.approx((-0.5, 0.5))
    assert self_similar_exponents(2, 2) == pytest.approx((-1.0, 0.5))
    assert self_similar_exponents(1, 3) == pytest.approx((-0.5, 0.5))
    for lam, p in [(0, 2), (-1, 2), (3, 3), (4, 3)]:
        with pytest.raises(ParameterError):
            self_similar_exponents(lam, p)


def test_time_change_examples():
    assert time_change(0.0, 1.0, 0.5) == 0.0
    assert time_change(2 * math.log(2), 1.0, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert time_change(200.0, 1.0, 0.5) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(ParameterError):
        inverse_time_change(2.0, 1.0, 0.5)


@given(fast_good())
def test_fast_good_constants_positive(P):
    b = exponent_bundle(P, logistic())
    assert b.sigma_star > 0 and b.kappa > 0 and b.alpha > 0 and b.k > 0
    assert b.d1 > 0 and b.d2 > 0 and b.d3 > 0
    assert b.sigma_star == pytest.approx(P.gamma_hat / P.p, rel=1e-15)
    assert abs(1 + b.alpha * P.gamma_hat - b.alpha * P.p / P.N) <= 1e-12 * b.alpha * P.p / P.N


@given(st.floats(1.05, 6), st.floats(0.01, 0.999))
def test_self_similar_identities(p, frac):
    lam = frac * (p / (p - 2) if p > 2 else 10.0)
    a, b = self_similar_exponents(lam, p)
    assert a < 0 < b
    assert abs(a + lam * b) <= 1e-12
    assert abs(2 * a + 1 - (a + b) * p) <= 1e-12


@given(st.floats(0.01, 5), st.floats(0.01, 1.0))
def test_time_change_inverse(rate, gh):
    t = np.random.default_rng(0).exponential(3.0 / (rate * gh), 10_000)
    tau = time_change(t, rate, gh)
    assert np.all(tau >= 0) and np.all(tau <= 1 / (rate * gh))
    order = np.argsort(t)
    assert np.all(np.diff(tau[order]) >= 0)
    ok = tau * rate * gh < 1 - 1e-6
    assert np.allclose(inverse_time_change(tau[ok], rate, gh), t[ok], rtol=1e-8, atol=1e-12)


def test_reaction_validation():
    f = logistic()
    assert validate_reaction(f) is f
    g = custom_reaction(lambda u: u * (1 - u) * (2 - u), 2.0)
    assert g.kind == "Custom"
    with pytest.raises(ParameterError):
        custom_reaction(lambda u: u * (1 - u) + 0.1, 1.0)
    with pytest.raises(ParameterError):
        custom_reaction(lambda u: u ** 2 * (1 - u), 1e-9)      # convex near 0
