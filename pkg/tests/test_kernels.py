import numpy as np
import pytest

from gsqg.kernels import (
    KernelParams, SingularityError, free_kernel, halfplane_kernel, k1, k2, ramp, symmetry_checks,
)

KP = KernelParams(0.25)


def direct_free(alpha, z1, z2):
    r = np.hypot(z1, z2)
    return np.array([z2, -z1]) / r ** (2 + 2 * alpha)


def test_kernel_params_validation():
    with pytest.raises(ValueError):
        KernelParams(0.5)
    with pytest.raises(ValueError):
        KernelParams(0.2, cutoff_radius=0.1, mollifier_width=0.2)
    with pytest.raises(ValueError):
        KernelParams(0.2, cutoff_radius=-1.0)
    assert not KernelParams(0.2).regularized


@pytest.mark.parametrize("y,alpha,expected", [
    ((1.0, 0.0), 0.25, (0.0, -1.0)),
    ((0.0, 2.0), 0.25, (2.0 / 2**2.5, 0.0)),
])
def test_free_kernel_examples(y, alpha, expected):
    assert np.allclose(free_kernel(KernelParams(alpha), np.array(y)), expected, rtol=1e-14)


def test_free_kernel_singular():
    with pytest.raises(SingularityError):
        free_kernel(KP, np.zeros(2))
    reg = KernelParams(0.25, cutoff_radius=0.2, mollifier_width=0.1)
    assert np.array_equal(free_kernel(reg, np.zeros(2)), np.zeros(2))


def test_free_kernel_odd():
    y = np.random.default_rng(0).normal(size=(100, 2))
    assert np.allclose(free_kernel(KP, -y), -free_kernel(KP, y), rtol=1e-15, atol=0)


def test_free_kernel_divergence_free_away_from_origin():
    rng = np.random.default_rng(1)
    ang = rng.uniform(0, 2 * np.pi, 100)
    r = rng.uniform(1.0, 3.0, 100)
    y = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    s = 1e-5
    e1, e2 = np.array([s, 0.0]), np.array([0.0, s])
    div = ((free_kernel(KP, y + e1)[:, 0] - free_kernel(KP, y - e1)[:, 0])
           + (free_kernel(KP, y + e2)[:, 1] - free_kernel(KP, y - e2)[:, 1])) / (2 * s)
    assert np.max(np.abs(div)) <= 1e-6


def test_halfplane_examples():
    a = KernelParams(0.3)
    assert halfplane_kernel(a, np.array([0.0, 0.0]), np.array([0.0, 1.0]))[1] == 0.0
    y = np.array([[0.4, 0.0], [-2.0, 0.0]])
    assert np.array_equal(halfplane_kernel(a, np.array([1.0, 1.0]), y), np.zeros((2, 2)))
    # two free terms written out by hand
    v = halfplane_kernel(KP, np.array([1.0, 1.0]), np.array([0.0, 2.0]))
    expected = direct_free(0.25, 1.0, -1.0) - direct_free(0.25, 1.0, 3.0)
    assert np.allclose(v, expected, rtol=1e-14)


def test_halfplane_second_component_vanishes_on_wall():
    rng = np.random.default_rng(2)
    x = np.column_stack([rng.uniform(-3, 3, 200), np.zeros(200)])
    y = np.column_stack([rng.uniform(-3, 3, 200), rng.uniform(0.01, 3, 200)])
    assert np.max(np.abs(halfplane_kernel(KP, x, y)[:, 1])) <= 1e-15


def test_halfplane_singular():
    with pytest.raises(SingularityError):
        halfplane_kernel(KP, np.array([1.0, 1.0]), np.array([1.0, 1.0]))


def test_quadrant_kernels_by_hand():
    x = np.array([1.0, 1.0])
    # k1: first component of the four free images with signs
    y = np.array([2.0, 0.5])
    imgs = [((1, 1), 1), ((-1, 1), -1), ((1, -1), -1), ((-1, -1), 1)]
    ref1 = sum(s * direct_free(0.25, *(x - y * np.array(r)))[0] for r, s in imgs)
    assert k1(KP, x, y) == pytest.approx(ref1, rel=1e-13)
    y = np.array([0.5, 2.0])
    ref2 = sum(s * direct_free(0.25, *(x - y * np.array(r)))[1] for r, s in imgs)
    assert k2(KP, x, y) == pytest.approx(ref2, rel=1e-13)


def test_quadrant_singular():
    with pytest.raises(SingularityError):
        k1(KP, np.array([1.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(SingularityError):
        k2(KP, np.array([1.0, 0.0]), np.array([1.0, 0.0]))


def test_k1_positive_on_trailing_triangle():
    # 0 < x1 - y1 <= x2 - y2 <= x2 <= x1
    rng = np.random.default_rng(3)
    n = 100_000
    x1 = 10 ** rng.uniform(-2, 2, n)
    x2 = x1 * rng.uniform(0, 1, n)
    d2 = x2 * rng.uniform(0, 1, n)
    d1 = d2 * (1 - rng.uniform(0, 1, n))
    ok = (d1 > 0) & (d1 <= d2) & (d2 <= x2) & (x2 <= x1)
    x = np.column_stack([x1, x2])[ok]
    y = np.column_stack([x1 - d1, x2 - d2])[ok]
    for alpha in (0.0, 0.1, 0.25, 0.4):
        assert np.sum(k1(KernelParams(alpha), x, y) <= 0) == 0


def test_k1_nonpositive_above_target():
    rng = np.random.default_rng(4)
    n = 100_000
    x = rng.uniform(0.01, 3, (n, 2))
    y = np.column_stack([rng.uniform(1e-3, 5, n), x[:, 1] + rng.uniform(0, 3, n)])
    keep = np.any(x != y, axis=1)
    assert np.all(k1(KP, x[keep], y[keep]) <= 0)


def test_k2_nonnegative_right_of_target():
    rng = np.random.default_rng(5)
    n = 100_000
    x = rng.uniform(0.01, 3, (n, 2))
    y = np.column_stack([x[:, 0] + rng.uniform(0, 3, n), rng.uniform(1e-3, 5, n)])
    keep = np.any(x != y, axis=1)
    assert np.sum(k2(KP, x[keep], y[keep]) < 0) == 0


def test_k2_left_of_target_bounded_by_near_pair():
    rng = np.random.default_rng(6)
    n = 20_000
    x = rng.uniform(0.1, 3, (n, 2))
    y = np.column_stack([x[:, 0] * rng.uniform(0.01, 0.99, n), rng.uniform(1e-3, 5, n)])
    x1, x2, y1, y2 = x[:, 0], x[:, 1], y[:, 0], y[:, 1]
    p = -(2 + 2 * 0.25) / 2
    near = (y1 - x1) * (((x1 - y1) ** 2 + (x2 - y2) ** 2) ** p
                        - ((x1 - y1) ** 2 + (x2 + y2) ** 2) ** p)
    assert np.all(near <= 0)
    assert np.all(near <= k2(KP, x, y) + 1e-12 * np.abs(near))


def test_ramp_profile_and_cutoff_convergence():
    reg = KernelParams(0.25, cutoff_radius=0.2, mollifier_width=0.1)
    r = np.array([0.0, 0.1, 0.15, 0.2, 0.5])
    v = ramp(reg, r)
    assert v[0] == 0.0 and v[1] == 0.0 and 0 < v[2] < 1 and v[3] == 1.0 and v[4] == 1.0
    y = np.array([0.3, 0.4])
    for c in (0.4, 0.2, 0.1):
        kp = KernelParams(0.25, cutoff_radius=c, mollifier_width=c / 2)
        assert np.array_equal(free_kernel(kp, y), free_kernel(KP, y))
    sharp = KernelParams(0.25, cutoff_radius=0.2)
    assert ramp(sharp, np.array([0.19]))[0] == 0.0 and ramp(sharp, np.array([0.2]))[0] == 1.0


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.25, 0.45])
def test_symmetry_report(alpha):
    rep = symmetry_checks(alpha, samples=500, seed=7)
    assert rep["pass"], rep["max_rel_err"]
