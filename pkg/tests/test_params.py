import numpy as np
import pytest
from scipy.optimize import brentq

from gsqg.params import (
    DomainError, Params, Regime, StretchMap, classify, kappa_beta, lambda_beta,
    lambda_beta_inv, stretch_point, unstretch_point,
)


@pytest.mark.parametrize("alpha,beta", [(0.0, 0.1), (0.5, 0.1), (-0.1, 0.0), (0.2, 1.0),
                                        (0.2, -0.1), (float("nan"), 0.0)])
def test_params_reject_out_of_range(alpha, beta):
    with pytest.raises(DomainError):
        Params(alpha, beta)


@pytest.mark.parametrize("alpha,beta,expected", [
    (0.25, 0.5, Regime.WELL_POSED),
    (0.1, 0.05, Regime.ILL_POSED_LOW),
    (0.3, 0.5, Regime.ILL_POSED_LOW),
    (0.2, 0.7, Regime.ILL_POSED_HIGH),
    (0.1, 0.2, Regime.WELL_POSED),
    (0.1, 0.8, Regime.WELL_POSED),
])
def test_classify_examples(alpha, beta, expected):
    assert classify(Params(alpha, beta)) is expected
    assert Params(alpha, beta).regime is expected


def test_classify_total_and_well_posed_needs_small_alpha():
    for a in np.linspace(0.01, 0.49, 25):
        for b in np.linspace(0.0, 0.99, 25):
            r = classify(Params(a, b))
            if r is Regime.WELL_POSED:
                assert a <= 0.25 and 2 * a <= b <= 1 - 2 * a
            elif r is Regime.ILL_POSED_LOW:
                assert b < 2 * a
            else:
                assert b > 1 - 2 * a and b >= 2 * a


@pytest.mark.parametrize("beta,x2,expected", [(0.0, 0.7, 0.7), (0.5, 1.0, 0.25), (0.5, 2.0, 1.0)])
def test_lambda_examples(beta, x2, expected):
    assert lambda_beta(StretchMap(beta), x2) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("beta,y2,expected", [(0.5, 0.25, 1.0), (0.0, 3.3, 3.3)])
def test_lambda_inverse_examples(beta, y2, expected):
    assert lambda_beta_inv(StretchMap(beta), y2) == pytest.approx(expected, rel=1e-14)


def test_lambda_inverse_against_bisection():
    smap = StretchMap(0.25)
    v = brentq(lambda s: lambda_beta(smap, s) - 0.1, 1e-12, 10.0, xtol=1e-15)
    assert lambda_beta_inv(smap, 0.1) == pytest.approx(v, rel=1e-12)


@pytest.mark.parametrize("beta,x2,expected", [(0.5, 0.25, 0.5), (0.3, 4.0, 1.0)])
def test_kappa_examples(beta, x2, expected):
    assert kappa_beta(beta, x2) == pytest.approx(expected, rel=1e-14)


def test_weight_at_image_point_closed_form():
    b = 0.5
    k = kappa_beta(b, lambda_beta(StretchMap(b), 1.0))
    assert k == pytest.approx(0.5, rel=1e-14)
    assert k == pytest.approx((1 - b) ** (b / (1 - b)), rel=1e-14)


@pytest.mark.parametrize("beta", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_lambda_monotone_convex_and_continuous(beta):
    smap = StretchMap(beta)
    x = np.linspace(1e-6, 3 * smap.matching_point, 4001)
    y = lambda_beta(smap, x)
    assert lambda_beta(smap, 0.0) == 0.0
    assert np.all(np.diff(y) > 0)
    m = smap.matching_point
    lower = smap.prefactor * m ** (1 / (1 - beta))
    upper = m - beta / (1 - beta)
    assert lower == pytest.approx(upper, rel=1e-12)
    xs = np.linspace(1e-3, m - 1e-3, 500)
    step = 1e-4
    second = (lambda_beta(smap, xs + step) - 2 * lambda_beta(smap, xs)
              + lambda_beta(smap, xs - step)) / step**2
    assert second.min() >= -1e-9 * max(1.0, np.abs(second).max())


@pytest.mark.parametrize("beta", [0.0, 0.2, 0.5, 0.8])
def test_derivative_is_weight_at_image(beta):
    smap = StretchMap(beta)
    rng = np.random.default_rng(1)
    x = rng.uniform(0.01, 4.0, 1000)
    step = 1e-6
    fd = (lambda_beta(smap, x + step) - lambda_beta(smap, x - step)) / (2 * step)
    exact = smap.derivative(x)
    assert np.max(np.abs(fd - exact) / exact) <= 1e-6


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.6])
def test_round_trip(beta):
    smap = StretchMap(beta)
    x = np.geomspace(1e-8, 10.0, 200)
    assert np.allclose(lambda_beta_inv(smap, lambda_beta(smap, x)), x, rtol=1e-12, atol=0)
    pts = np.column_stack([np.linspace(-1, 1, 7), np.linspace(-2, 2, 7)])
    assert np.allclose(unstretch_point(smap, stretch_point(smap, pts)), pts, atol=1e-13)


def test_negative_heights_rejected():
    with pytest.raises(DomainError):
        lambda_beta(StretchMap(0.3), -0.1)
    with pytest.raises(DomainError):
        kappa_beta(0.3, np.array([0.1, -1.0]))
