import numpy as np
import pytest

from gsqg.field import ResolutionError, ScalarField, stretch_field, wbeta_norm
from gsqg.params import Params, StretchMap, lambda_beta, lambda_beta_inv


def cone(x1, x2):
    return np.maximum(0.0, 1.0 - np.hypot(x1 - 2.0, x2 - 2.0))


def test_support_and_interpolation():
    f = ScalarField.from_function(lambda a, b: a + 2 * b, 0.1, (0, 1, 0, 1),
                                  support=(0.0, 0.8, 0.0, 0.8))
    assert f(0.35, 0.25) == pytest.approx(0.35 + 0.5, abs=1e-12)
    assert f(0.9, 0.5) == 0.0
    assert f(-1.0, 0.5) == 0.0
    assert np.all(f.values[:, f.x1 >= 0.8 - 1e-12] == 0)


def test_odd_extensions():
    f = ScalarField.from_function(lambda a, b: np.sin(a + 1) * np.cos(b), 0.05, (0, 1, 0, 1),
                                  odd_x1=True, odd_x2=True)
    rng = np.random.default_rng(0)
    p = rng.uniform(0.05, 0.95, (50, 2))
    v = f(p[:, 0], p[:, 1])
    assert np.allclose(f(-p[:, 0], p[:, 1]), -v)
    assert np.allclose(f(p[:, 0], -p[:, 1]), -v)
    assert np.allclose(f(-p[:, 0], -p[:, 1]), v)


def test_bad_construction():
    with pytest.raises(ValueError):
        ScalarField(np.zeros(5), 0.1)
    with pytest.raises(ValueError):
        ScalarField(np.zeros((3, 3)), 0.0)
    with pytest.raises(ValueError):
        ScalarField(np.zeros((3, 3)), 0.1, interpolation="cubic")


def test_save_load_round_trip(tmp_path):
    f = ScalarField.from_function(cone, 0.25, (0, 4, 0, 4), odd_x2=True)
    path = f.save(tmp_path / "theta.json")
    g = ScalarField.load(path)
    assert np.array_equal(f.values, g.values)
    assert g.header() == f.header()
    assert (tmp_path / "theta.json.bin").stat().st_size == f.values.size * 8


def test_wbeta_zero_field():
    f = ScalarField(np.zeros((5, 5)), 0.1)
    assert wbeta_norm(f, Params(0.2, 0.5)) == (0.0, 0.0)


def test_wbeta_too_small_grid():
    with pytest.raises(ResolutionError):
        wbeta_norm(ScalarField(np.zeros((2, 5)), 0.1), Params(0.2))


@pytest.mark.parametrize("beta", [0.0, 0.4, 0.8])
def test_cone_seminorm(beta):
    h = 0.01
    f = ScalarField.from_function(cone, h, (0, 4, 0, 4))
    _, semi = wbeta_norm(f, Params(0.2, beta), form="euclidean")
    # kappa = 1 on the whole cone support (x2 >= 1)
    assert semi == pytest.approx(1.0, abs=5 * h)


def test_seminorm_forms_differ_only_by_combination():
    f = ScalarField.from_function(cone, 0.02, (0, 4, 0, 4))
    _, s_sum = wbeta_norm(f, Params(0.2, 0.3), form="sum")
    _, s_euc = wbeta_norm(f, Params(0.2, 0.3), form="euclidean")
    assert s_euc <= s_sum <= 2 * s_euc
    with pytest.raises(ValueError):
        wbeta_norm(f, Params(0.2, 0.3), form="max")


@pytest.mark.parametrize("beta", [0.3, 0.5])
def test_weighted_norm_invariant_under_stretching(beta):
    # Lipschitz profile in stretched variables, composed with the inverse map
    smap = StretchMap(beta)
    tilde = lambda a, b: np.clip(1.5 - np.abs(a - 1.0) - np.abs(b - 0.8), 0.0, 1.0)
    h = 0.005
    g = ScalarField.from_function(tilde, h, (0, 2, 0, 2), support=(-10.0, 10.0, -10.0, 10.0))
    f = ScalarField.from_function(lambda a, b: tilde(a, lambda_beta(smap, b)), h, (0, 2, 0, 3),
                                  support=(-10.0, 10.0, -10.0, 10.0))
    _, semi_tilde = wbeta_norm(g, Params(0.2, 0.0), form="euclidean")
    _, semi = wbeta_norm(f, Params(0.2, beta), form="euclidean")
    assert semi == pytest.approx(semi_tilde, abs=0.05)


def test_stretch_identity_and_sup():
    f = ScalarField.from_function(cone, 0.05, (0, 4, 0, 4))
    assert np.array_equal(stretch_field(f, StretchMap(0.0)).values, f.values)
    s = stretch_field(f, StretchMap(0.5), "inverse")
    assert s.sup_norm() == pytest.approx(f.sup_norm(), abs=0.05)
    with pytest.raises(ValueError):
        stretch_field(f, StretchMap(0.5), "sideways")


def test_stretch_round_trip():
    smap = StretchMap(0.4)
    h = 0.02
    f = ScalarField.from_function(lambda a, b: np.sin(a) * np.cos(b), h, (0, 2, 0, 2),
                                  support=(-10.0, 10.0, -10.0, 10.0))
    back = stretch_field(stretch_field(f, smap, "forward"), smap, "inverse")
    X1, X2 = f.nodes()
    # compare away from the wall and from the top rows that map outside the grid
    keep = (X2 > 2 * h) & (lambda_beta_inv(smap, X2) < 2.0 - 2 * h)
    assert np.max(np.abs(back.values - f.values)[keep]) <= 10 * h**2


def test_plateau_maps_to_plateau():
    f = ScalarField.from_function(lambda a, b: np.where((b > 0.5) & (b < 1.5), 1.0, 0.0),
                                  0.05, (0, 1, 0, 3), support=(-10.0, 10.0, -10.0, 10.0))
    smap = StretchMap(0.5)
    s = stretch_field(f, smap, "forward")
    y = lambda_beta(smap, s.x2)
    inside = (y > 0.5 + 0.05) & (y < 1.5 - 0.05)
    outside = (y < 0.5 - 0.05) | (y > 1.5 + 0.05)
    assert np.all(s.values[inside] == 1.0)
    assert np.all(s.values[outside] == 0.0)
    assert s.values.min() >= 0.0 and s.values.max() <= 1.0


def test_l1_mass_of_constant():
    f = ScalarField(np.ones((11, 21)), 0.1, support=(-1.0, 3.0, -1.0, 2.0))
    assert f.l1_mass() == pytest.approx(2.0 * 1.0)


def test_default_support_zeroes_edges():
    f = ScalarField(np.ones((11, 21)), 0.1)
    assert np.all(f.values[[0, -1], :] == 0) and np.all(f.values[:, [0, -1]] == 0)
    assert np.all(f.values[1:-1, 1:-1] == 1)
