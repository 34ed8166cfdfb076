import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from gsqg.field import ScalarField
from gsqg.kernels import KernelParams
from gsqg.params import StretchMap, kappa_beta, lambda_beta
from gsqg.reduced import reduced_velocity_at
from gsqg.velocity import (
    ConvergenceError, QuadConfig, divergence_at, gradient_diag, holder_seminorm_sample,
    stretched_velocity_at, velocity_at, velocity_many,
)

KP = KernelParams(0.25)
WIDE = (-10.0, 10.0, -10.0, 10.0)


def bump(a, b, c=(0.6, 0.5)):
    return np.exp(-4 * ((a - c[0]) ** 2 + (b - c[1]) ** 2))


@pytest.fixture(scope="module")
def odd_odd():
    return ScalarField.from_function(bump, 0.1, (0, 2, 0, 2), odd_x1=True, odd_x2=True)


@pytest.fixture(scope="module")
def odd_x2():
    return ScalarField.from_function(bump, 0.1, (-2, 2, 0, 2), odd_x2=True)


def rectangle_velocity(alpha, x, a, b, c, d):
    """Constant unit density on [a, b] x [c, d]: one variable in closed form, one by quad."""
    x1, x2 = x
    p = lambda s, t: (s * s + t * t) ** -alpha / (2 * alpha)
    g1 = lambda y1: p(x1 - y1, x2 - d) - p(x1 - y1, x2 - c)
    g2 = lambda y2: -(p(x1 - b, x2 - y2) - p(x1 - a, x2 - y2))
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=200)
    u1 = quad(g1, a, b, points=[x1] if a < x1 < b else None, **opts)[0]
    u2 = quad(g2, c, d, points=[x2] if c < x2 < d else None, **opts)[0]
    return np.array([u1, u2])


@pytest.mark.parametrize("target", [(1.0, 0.3), (0.8, 0.6), (1.2, 1.0), (2.0, 2.0)])
def test_rectangle_closed_form(target):
    # nearest-node pieces: the unit nodes own the rectangle [0.45, 1.55] x [0.45, 1.25]
    f = ScalarField.from_function(
        lambda a, b: ((a > 0.49) & (a < 1.51) & (b > 0.49) & (b < 1.21)).astype(float),
        0.1, (0, 2, 0, 2), support=WIDE, interpolation="nearest")
    qc = QuadConfig(abs_tol=1e-10, rel_tol=1e-10)
    r = velocity_at(f, KP, np.array(target), qc)
    ref = rectangle_velocity(0.25, target, 0.45, 1.55, 0.45, 1.25)
    assert np.allclose(r.u, ref, atol=1e-6, rtol=0)


def test_radial_bump_center_velocity_vanishes():
    f = ScalarField.from_function(lambda a, b: bump(a, b, (1.0, 1.0)), 0.05, (0, 2, 0, 2),
                                  support=WIDE)
    r = velocity_at(f, KP, np.array([1.0, 1.0]))
    assert np.all(np.abs(r.u) <= max(r.err_est, 1e-12))


def test_axis_u1_vanishes(odd_odd):
    s = np.linspace(0.1, 1.9, 10)
    U, E = velocity_many(odd_odd, KP, np.column_stack([np.zeros(10), s]))
    assert np.all(np.abs(U[:, 0]) <= np.maximum(E, 1e-15))


def test_u2_over_height_bounded(odd_x2):
    ratios = []
    for hh in (0.1, 0.05, 0.025):
        U, _ = velocity_many(odd_x2, KP, np.array([[0.3, hh], [0.9, hh], [-0.4, hh]]))
        ratios.append(np.abs(U[:, 1]) / hh)
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    assert np.all(ratios.max(axis=0) <= 1.5 * ratios.min(axis=0))


def test_divergence_free_random_points(odd_odd):
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.1, 1.9, (20, 2))
    for p in pts:
        div, budget = divergence_at(odd_odd, KP, p)
        assert abs(div) <= budget


def test_divergence_free_with_cutoff(odd_odd):
    kp = KernelParams(0.25, cutoff_radius=0.1, mollifier_width=0.05)
    for p in ([0.5, 0.5], [1.2, 0.4], [0.3, 1.4]):
        div, budget = divergence_at(odd_odd, kp, np.array(p))
        assert abs(div) <= budget


def test_reduced_kernel_matches_images(odd_odd):
    rng = np.random.default_rng(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for p in rng.uniform(0.1, 1.8, (20, 2)):
            assert np.allclose(reduced_velocity_at(odd_odd, KP, p),
                               velocity_at(odd_odd, KP, p).u, atol=1e-8, rtol=0)


def test_cutoff_convergence(odd_odd):
    far = np.array([3.0, 2.8])
    near = np.array([0.7, 0.6])
    exact_far = velocity_at(odd_odd, KP, far).u
    exact_near = velocity_at(odd_odd, KP, near).u
    gaps = []
    for c in (0.2, 0.1, 0.05):
        kp = KernelParams(0.25, cutoff_radius=c, mollifier_width=c / 2)
        assert np.allclose(velocity_at(odd_odd, kp, far).u, exact_far, atol=1e-8)
        gaps.append(np.linalg.norm(velocity_at(odd_odd, kp, near).u - exact_near))
    assert gaps[0] > gaps[1] > gaps[2]


def test_stretched_velocity(odd_x2):
    x = np.array([0.4, 0.3])
    qc = QuadConfig()
    same = stretched_velocity_at(odd_x2, KP, x, qc, StretchMap(0.0))
    assert np.allclose(same.u, velocity_at(odd_x2, KP, x, qc).u, atol=0, rtol=0)
    smap = StretchMap(0.5)
    st = stretched_velocity_at(odd_x2, KP, x, qc, smap)
    y2 = lambda_beta(smap, x[1])
    plain = velocity_at(odd_x2, KP, np.array([x[0], y2]), qc).u
    assert st.u[1] * kappa_beta(0.5, y2) == pytest.approx(plain[1], rel=1e-14)
    with pytest.raises(ValueError):
        stretched_velocity_at(odd_x2, KP, np.array([0.1, 0.0]), qc, smap)


def test_stretched_vertical_bounded_near_wall(odd_x2):
    smap = StretchMap(0.4)
    vals = [abs(stretched_velocity_at(odd_x2, KP, np.array([0.3, s]), QuadConfig(), smap).u[1])
            for s in (0.2, 0.1, 0.05, 0.025)]
    # the stretched vertical component stays bounded as the wall is approached
    assert np.all(np.isfinite(vals)) and max(vals) <= vals[0]


def test_far_field_gradient_decay():
    f = ScalarField.from_function(lambda a, b: bump(a, b, (0.0, 0.0)), 0.1, (-1.5, 1.5, -1.5, 1.5))
    g10 = gradient_diag(f, KP, np.array([10.0, 1e-3]))
    g20 = gradient_diag(f, KP, np.array([20.0, 1e-3]))
    ratio = abs(g10.d1u2) / abs(g20.d1u2)
    assert ratio == pytest.approx(2 ** 2.5, rel=0.1)


def test_gradient_diag_rejects_wall(odd_x2):
    with pytest.raises(ValueError):
        gradient_diag(odd_x2, KP, np.array([0.2, 0.0]))


def test_holder_sample(odd_odd):
    zero = odd_odd.scaled(0.0)
    pairs = np.array([[[0.2, 0.3], [0.25, 0.35]], [[1.0, 1.0], [1.1, 0.9]]])
    assert holder_seminorm_sample(zero, KP, QuadConfig(), pairs) == 0.0
    one = holder_seminorm_sample(odd_odd, KP, QuadConfig(), pairs)
    two = holder_seminorm_sample(odd_odd.scaled(2.0), KP, QuadConfig(), pairs)
    assert two == pytest.approx(2 * one, rel=1e-6)
    with pytest.raises(ValueError):
        holder_seminorm_sample(odd_odd, KP, QuadConfig(), np.array([[[0.1, 0.1], [0.1, 0.1]]]))


def test_convergence_error_carries_partial(odd_odd):
    qc = QuadConfig(abs_tol=1e-300, rel_tol=1e-300, max_subdivisions=1)
    with pytest.raises(ConvergenceError) as info:
        velocity_at(odd_odd, KP, np.array([0.5, 0.5]), qc)
    assert np.all(np.isfinite(info.value.partial.u))


def test_quad_config_validation():
    with pytest.raises(ValueError):
        QuadConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        QuadConfig(cell_order=1)
