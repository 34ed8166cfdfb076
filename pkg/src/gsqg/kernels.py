"""Closed-form Biot-Savart kernels: free plane, half-plane images, odd-odd quadrant.

All functions broadcast over leading array dimensions.  Points are arrays with
a trailing axis of length 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularityError(ArithmeticError):
    """Kernel evaluated at (or at an image of) its singular point."""


@dataclass(frozen=True)
class KernelParams:
    """Kernel exponent and optional cutoff.

    With ``cutoff_radius > 0`` the kernel is multiplied by a C^2 ramp that is 0
    for ``|y| <= cutoff_radius - mollifier_width`` and 1 for
    ``|y| >= cutoff_radius``.  A zero width gives a sharp cutoff.
    """

    alpha: float
    cutoff_radius: float = 0.0
    mollifier_width: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"alpha must lie in [0, 1/2), got {self.alpha!r}")
        if self.cutoff_radius < 0 or self.mollifier_width < 0:
            raise ValueError("cutoff radius and mollifier width must be non-negative")
        if self.mollifier_width > self.cutoff_radius:
            raise ValueError("mollifier width cannot exceed the cutoff radius")

    @property
    def exponent(self) -> float:
        return 2.0 + 2.0 * self.alpha

    @property
    def regularized(self) -> bool:
        return self.cutoff_radius > 0


def ramp(kp: KernelParams, r):
    """Cutoff profile as a function of distance; identically 1 when unregularized."""
    r = np.asarray(r, dtype=float)
    if not kp.regularized:
        return np.ones_like(r)
    c, w = kp.cutoff_radius, kp.mollifier_width
    if w == 0:
        return (r >= c).astype(float)
    t = np.clip((r - (c - w)) / w, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def _pts(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 2:
        raise ValueError("points need a trailing axis of length 2")
    return p


def _out(v):
    return v if np.ndim(v) else float(v)


def free_components(kp: KernelParams, z1, z2):
    """``(z2, -z1) / |z|^(2+2 alpha)`` times the ramp, as two arrays.  No checks."""
    r2 = z1 * z1 + z2 * z2
    inv = r2 ** (-0.5 * kp.exponent)
    if kp.regularized:
        inv = inv * ramp(kp, np.sqrt(r2))
    return z2 * inv, -z1 * inv


def free_kernel(kp: KernelParams, y):
    y = _pts(y)
    r2 = y[..., 0] ** 2 + y[..., 1] ** 2
    zero = r2 == 0
    if np.any(zero) and (not kp.regularized or kp.cutoff_radius - kp.mollifier_width <= 0):
        raise SingularityError("free kernel evaluated at the origin")
    with np.errstate(divide="ignore", invalid="ignore"):
        k1, k2 = free_components(kp, y[..., 0], y[..., 1])
    # inside the cutoff core the ramp vanishes identically
    return np.stack([np.where(zero, 0.0, k1), np.where(zero, 0.0, k2)], axis=-1)


def halfplane_kernel(kp: KernelParams, x, y):
    """Image-pair integrand for data supported in the upper half-plane."""
    x, y = np.broadcast_arrays(_pts(x), _pts(y))
    ybar = y * np.array([1.0, -1.0])
    d = x - y
    if not kp.regularized and np.any((d[..., 0] == 0) & (d[..., 1] == 0)):
        raise SingularityError("half-plane kernel evaluated at x = y")
    return free_kernel(kp, d) - free_kernel(kp, x - ybar)


def _quadrant_checks(kp, x, y):
    if kp.regularized:
        return
    for sx, sy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        if np.any((x[..., 0] == sx * y[..., 0]) & (x[..., 1] == sy * y[..., 1])):
            raise SingularityError("quadrant kernel evaluated at an image point")


def _inv_pow(kp, a, b):
    r2 = a * a + b * b
    v = r2 ** (-0.5 * kp.exponent)
    if kp.regularized:
        v = v * ramp(kp, np.sqrt(r2))
    return v


def k1(kp: KernelParams, x, y):
    """First velocity component kernel for data odd in both variables.

    ``u1(x) = int_{quadrant} k1(x, y) theta(y) dy``.
    """
    x, y = np.broadcast_arrays(_pts(x), _pts(y))
    _quadrant_checks(kp, x, y)
    x1, x2, y1, y2 = x[..., 0], x[..., 1], y[..., 0], y[..., 1]
    v = ((x2 - y2) * _inv_pow(kp, x1 - y1, x2 - y2)
         - (x2 - y2) * _inv_pow(kp, x1 + y1, x2 - y2)
         - (x2 + y2) * _inv_pow(kp, x1 - y1, x2 + y2)
         + (x2 + y2) * _inv_pow(kp, x1 + y1, x2 + y2))
    return _out(v)


def k2(kp: KernelParams, x, y):
    """Second velocity component kernel for data odd in both variables."""
    x, y = np.broadcast_arrays(_pts(x), _pts(y))
    _quadrant_checks(kp, x, y)
    x1, x2, y1, y2 = x[..., 0], x[..., 1], y[..., 0], y[..., 1]
    v = ((y1 - x1) * _inv_pow(kp, x1 - y1, x2 - y2)
         - (y1 - x1) * _inv_pow(kp, x1 - y1, x2 + y2)
         + (y1 + x1) * _inv_pow(kp, x1 + y1, x2 - y2)
         - (y1 + x1) * _inv_pow(kp, x1 + y1, x2 + y2))
    return _out(v)


def symmetry_checks(alpha: float, samples: int = 1000, seed: int = 0) -> dict:
    """Largest relative violations of the kernel identities on random points.

    Checks oddness, homogeneity and orthogonality of the free kernel, the
    image-pair form of the half-plane kernel, the four-image form of the
    quadrant kernels, and the parities of the quadrant kernels in ``x``.
    """
    kp = KernelParams(alpha)
    rng = np.random.default_rng(seed)
    y = rng.uniform(-2, 2, (samples, 2))
    x = rng.uniform(0.05, 2, (samples, 2))
    q = rng.uniform(0.05, 2, (samples, 2))
    lam = rng.uniform(0.1, 10, samples)[:, None]

    def rel(a, b):
        scale = np.maximum(np.abs(a), np.abs(b)).max()
        return float(np.abs(a - b).max() / scale) if scale > 0 else 0.0

    K = free_kernel(kp, y)
    err = {
        "free_odd": rel(free_kernel(kp, -y), -K),
        "free_homogeneous": rel(free_kernel(kp, lam * y), lam ** (-1 - 2 * alpha) * K),
        "free_orthogonal": float(np.abs(np.sum(K * y, axis=-1)).max()
                                 / np.abs(K).max() / np.abs(y).max()),
    }
    qbar = q * np.array([1.0, -1.0])
    err["halfplane_images"] = rel(halfplane_kernel(kp, x, q),
                                  free_kernel(kp, x - q) - free_kernel(kp, x - qbar))
    img = np.zeros_like(x)
    for s1, s2 in ((1, 1), (-1, 1), (1, -1), (-1, -1)):
        img += s1 * s2 * free_kernel(kp, x - q * np.array([s1, s2]))
    err["quadrant_k1_images"] = rel(k1(kp, x, q), img[:, 0])
    err["quadrant_k2_images"] = rel(k2(kp, x, q), img[:, 1])
    fx1 = x * np.array([-1.0, 1.0])
    fx2 = x * np.array([1.0, -1.0])
    err["k1_odd_x1"] = rel(k1(kp, fx1, q), -k1(kp, x, q))
    err["k2_even_x1"] = rel(k2(kp, fx1, q), k2(kp, x, q))
    err["k1_even_x2"] = rel(k1(kp, fx2, q), k1(kp, x, q))
    err["k2_odd_x2"] = rel(k2(kp, fx2, q), -k2(kp, x, q))
    tol = 1e-12
    return {"alpha": alpha, "samples": samples, "seed": seed, "tolerance": tol,
            "max_rel_err": err, "pass": bool(max(err.values()) <= tol)}
