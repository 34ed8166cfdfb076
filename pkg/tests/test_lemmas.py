import numpy as np
import pytest
from scipy.integrate import quad

from gsqg import lemmas, regions

ALPHAS = [0.05, 0.1, 0.15, 0.2, 0.25]


def f_ref(alpha, s):
    return quad(lambda q: (q * q + 1) ** -alpha, 0, s, epsabs=1e-13, epsrel=1e-13)[0]


def test_f_alpha_values():
    assert lemmas.f_alpha(0.0, 2.7) == 2.7
    v = lemmas.f_alpha(0.25, 1.0)
    assert v >= 0.9374 and v >= 0.92
    assert v == pytest.approx(f_ref(0.25, 1.0), abs=1e-10)
    assert lemmas.f_alpha(0.25, -1.0) == -v


@pytest.mark.parametrize("alpha", [0.05, 0.2, 0.4])
def test_f_below_identity_and_increasing(alpha):
    s = np.linspace(0.01, 20, 60)
    f = np.array([lemmas.f_alpha(alpha, x) for x in s])
    assert np.all(f <= s) and np.all(np.diff(f) > 0)


@pytest.mark.parametrize("alpha", [0.05, 0.15, 0.25])
def test_mu_positive_and_bounded(alpha):
    mu = lemmas.mu_alpha(alpha)
    assert mu > 0
    assert mu <= 1 / (1 - 2 * alpha) - lemmas.f_alpha(alpha, 1.0) + alpha / (1 + 2 * alpha)


def test_mu_stabilizes():
    assert lemmas.mu_alpha(0.25, s_max=1e3) == pytest.approx(lemmas.mu_alpha(0.25, s_max=1e4),
                                                             abs=1e-8)


@pytest.mark.parametrize("gamma", [0.5, 2.0])
def test_mu_limit_scaling(gamma):
    a, s = 0.2, 1e4
    lhs = gamma ** (2 * a - 1) * lemmas.f_alpha(a, gamma * s) - s ** (1 - 2 * a) / (1 - 2 * a)
    assert lhs == pytest.approx(-gamma ** (2 * a - 1) * lemmas.mu_alpha(a), abs=1e-4)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_I_at_one_closed_form(alpha):
    a = alpha
    expected = ((4 - 2**-a) * lemmas.f_alpha(a, 1.0)
                - (2 + 2**-a - 2 ** (1 - 2 * a)) / (1 - 2 * a))
    assert lemmas.I_of_b(a, 1.0) == pytest.approx(expected, abs=1e-12)


def test_I_of_b_matches_region_quadrature():
    assert lemmas.I_of_b(0.2, 0.5) == pytest.approx(regions.horizontal_bracket(0.2, 0.5), abs=1e-5)


def test_g_nondecreasing_and_minimum():
    a = 0.25
    g = [lemmas.g_of_c(a, c) for c in (1, 2, 4, 8)]
    assert all(np.diff(g) >= 0)
    g1 = (3 * 2 ** (-1 - a) / (1 - 2 * a) - 2 * lemmas.f_alpha(a, 1.0)
          - 2 ** (-1 - a) * lemmas.mu_alpha(a))
    assert lemmas.g_at_one(a) == pytest.approx(g1, abs=1e-12)
    assert lemmas.I_at_one(a) + 2 * lemmas.g_at_one(a) >= 0.1


@pytest.mark.parametrize("alpha", ALPHAS)
def test_lemma42(alpha):
    r = lemmas.lemma42_infimum(alpha)
    assert r.passed
    assert r.closed_form >= 1 / 20
    assert r.discrepancy <= 1e-4
    assert set(r.details["cross_checks"]) == {"0.25", "0.5", "1"}


def test_lemma42_quarter_first_fraction():
    # at alpha = 1/4 the subtracted fraction in I(1) is below 0.9033
    a = 0.25
    frac = (2 + 2**-a - 2 ** (1 - 2 * a)) / ((1 - 2 * a) * (4 - 2**-a))
    assert frac < 0.9033
    assert lemmas.I_at_one(a) >= 1 / 20


def test_lemma42_domain():
    with pytest.raises(ValueError):
        lemmas.lemma42_infimum(0.3)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_lemma43(alpha):
    r = lemmas.lemma43_value(alpha)
    assert r.passed and r.closed_form > 0 and r.discrepancy <= 1e-4


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.25])
def test_lemma41(alpha):
    r = lemmas.lemma41_check(alpha, 100_000, seed=3)
    assert r["violations"] == 0
    assert r["reduced_violations"] == 0
    assert r["diagonal_violations"] == 0


def test_lemma41_rejects_empty():
    with pytest.raises(ValueError):
        lemmas.lemma41_check(0.1, 0)


def test_critical_margin():
    m = lemmas.critical_alpha_margin(0.25)
    assert 0.030 <= m <= 0.038
    grid = np.linspace(0.05, 0.3, 26)
    assert np.all(np.diff([lemmas.critical_alpha_margin(a) for a in grid]) < 0)
    root = lemmas.critical_alpha()[0]
    assert abs(root - 0.257) <= 0.003


def test_kryz_readings():
    assert lemmas.kryz_margin(0.01) > 0
    assert lemmas.kryz_margin(0.2) < 0
    assert abs(lemmas.kryz_root()[0] - 0.05) <= 0.02
    rep = lemmas.thresholds_report()
    assert rep["kryz_printed_reading"]["ambiguity_flag"]
    assert rep["kryz_printed_reading"]["max_on_grid"] < 0


def test_bisect_without_sign_change_returns_none():
    assert lemmas.bisect(lambda a: 1.0 + a, 0.1, 0.2) is None
    root, bracket, residual = lemmas.bisect(lambda a: a - 0.3, 0.1, 0.2)
    assert root == pytest.approx(0.3, abs=1e-12) and bracket[0] <= 0.3 <= bracket[1]


def test_line_identity_by_hand():
    a, other, lo, hi = 0.2, 0.7, 0.3, 2.0
    lhs = 2 * a * quad(lambda t: t / (other**2 + t**2) ** (1 + a), lo, hi, epsabs=1e-14)[0]
    assert lemmas.weighted_line_integral(a, other, lo, hi) == pytest.approx(
        (other**2 + lo**2) ** -a - (other**2 + hi**2) ** -a, abs=1e-14)
    assert lemmas.weighted_line_integral(a, other, lo, hi) == pytest.approx(lhs, abs=1e-12)


def test_identity_checks():
    r = lemmas.identity_checks(draws=20, region_draws=2, seed=1)
    assert r["line_integral_max_err"] <= 1e-9 and r["power_integral_max_err"] <= 1e-9
    assert r["bad_box_max_err"] <= 1e-5 and r["good_strip_max_err"] <= 1e-5
