"""Direct 2D quadrature of |x_k| / |x|^(2+2 alpha) over unbounded strip regions.

A region is a union of strips.  Each strip has an outer variable running over
an interval (possibly unbounded) and an inner variable between two affine
functions of it.  Unbounded outer ranges are mapped onto (0, 1] by
``t = T * v**(-1/(2 alpha))``; since the inner integral decays like
``t**(-1-2 alpha)`` along every strip used here, the mapped integrand stays
bounded and the tail is integrated rather than truncated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

INNER_OPTS = dict(epsabs=0.0, epsrel=1e-12, limit=400)
OUTER_OPTS = dict(epsabs=1e-13, epsrel=1e-11, limit=400)


@dataclass(frozen=True)
class Strip:
    """``{outer in (t0, t1), inner in base(outer) + (lo(outer), hi(outer))}``.

    ``outer_axis`` is 1 when the outer variable is x1 and 2 when it is x2.
    Offsets from ``base`` keep the inner interval exact when the strip runs
    off to large distances.
    """

    outer_axis: int
    t0: float
    t1: float
    lo: Callable[[float], float]
    hi: Callable[[float], float]
    base: Callable[[float], float] = lambda t: 0.0


def _integrand(alpha: float, weight_axis: int):
    p = 1.0 + alpha

    def f(x1, x2):
        w = abs(x1) if weight_axis == 1 else abs(x2)
        r2 = x1 * x1 + x2 * x2
        return w / r2**p if r2 > 0 else 0.0

    return f


def _inner(alpha, weight_axis, strip: Strip, t: float) -> float:
    f = _integrand(alpha, weight_axis)
    lo, hi = strip.lo(t), strip.hi(t)
    if hi <= lo:
        return 0.0
    c = strip.base(t)
    if strip.outer_axis == 1:
        g = lambda s: f(t, c + s)
    else:
        g = lambda s: f(c + s, t)
    pts = [-c] if lo < -c < hi else None
    return quad(g, lo, hi, points=pts, **INNER_OPTS)[0]


def strip_integral(alpha: float, weight_axis: int, strip: Strip) -> float:
    """Integral of ``|x_k| |x|^(-2-2 alpha)`` over one strip."""
    t0, t1 = strip.t0, strip.t1
    sign = 1.0
    if np.isneginf(t0):
        # integrate in the negated outer variable so the open end is +inf
        sign, t0, t1 = -1.0, -t1, np.inf
    G = lambda t: _inner(alpha, weight_axis, strip, sign * t)
    if np.isfinite(t1):
        pts = [0.0] if t0 < 0.0 < t1 else None
        return quad(G, t0, t1, points=pts, **OUTER_OPTS)[0]
    T = max(2.0, 2.0 * abs(t0))
    head = 0.0
    if T > t0:
        head = quad(G, t0, T, points=[0.0] if t0 < 0.0 < T else None, **OUTER_OPTS)[0]
    return head + _mapped_tail(G, T, 2.0 * alpha)


def _mapped_tail(G, T: float, decay: float) -> float:
    """``int_T^inf G(t) dt`` for ``G(t) ~ t**(-1-decay)`` via ``t = T v**(-1/decay)``."""
    if decay <= 0:
        raise ValueError("tail mapping needs a positive decay exponent")
    k = 1.0 / decay

    def H(v):
        t = T * v**-k
        return G(t) * T * k * v ** (-k - 1.0)

    # stop at t = 1e12; H is nearly constant below v_min (its variation is
    # O(1/t)), so the remainder is H(v_min) * v_min to that order
    v_min = (T / 1e12) ** decay
    return quad(H, v_min, 1.0, **OUTER_OPTS)[0] + H(v_min) * v_min


def region_integral(alpha: float, weight_axis: int, strips) -> float:
    return float(sum(strip_integral(alpha, weight_axis, s) for s in strips))


# regions for the horizontal-velocity estimate (weight |x2|)

def strips_B_minus(b: float):
    if b <= 0:
        return []
    return [Strip(1, -1.0, 0.0, lambda t: -b, lambda t: 0.0),
            Strip(1, 0.0, 1.0, lambda t: -b, lambda t: 0.0)]


def strips_B_plus(b: float):
    if b <= 0:
        return []
    return [Strip(1, -1.0, 0.0, lambda t: 0.0, lambda t: b),
            Strip(1, 0.0, 1.0, lambda t: 0.0, lambda t: b)]


def strips_G(b: float):
    return [Strip(2, 0.0, np.inf, lambda t: 0.0, lambda t: 2.0, base=lambda t: t)]


def strips_G_minus(b: float):
    return [Strip(2, -np.inf, -b, lambda t: -2 * b, lambda t: 2.0 - 2 * b, base=lambda t: -t)]


def strips_G_star(b: float):
    return [Strip(2, -np.inf, -b, lambda t: -2 * b, lambda t: min(0.0, 2.0 - 2 * b), base=lambda t: -t)]


def horizontal_bracket(alpha: float, b: float, substituted: bool = True) -> float:
    """``2 alpha`` times [good regions minus bad box] for the horizontal estimate.

    ``substituted=True`` uses the trimmed lower region (the closed-form
    quantity); ``False`` uses the full lower strip.
    """
    lower = strips_G_star(b) if substituted else strips_G_minus(b)
    good = region_integral(alpha, 2, strips_G(b) + lower)
    bad = region_integral(alpha, 2, strips_B_minus(b))
    return 2 * alpha * (good - bad)


# regions for the vertical-velocity estimate (weight |x1|)

def strips_vertical_good():
    return [
        Strip(1, 1.0, np.inf, lambda t: -1.0, lambda t: 1.0),
        Strip(1, -3.0, -2.0, lambda t: -1.0, lambda t: -t - 2.0),
        Strip(1, -np.inf, -3.0, lambda t: -1.0, lambda t: 1.0),
    ]


def strips_vertical_bad():
    return [
        Strip(1, 0.0, np.inf, lambda t: 0.0, lambda t: 2.0, base=lambda t: t),
        Strip(1, -3.0, -2.0, lambda t: 1.0, lambda t: -t),
        Strip(1, -np.inf, -3.0, lambda t: -2.0, lambda t: 0.0, base=lambda t: -t),
    ]


def vertical_bracket(alpha: float) -> float:
    good = region_integral(alpha, 1, strips_vertical_good())
    bad = region_integral(alpha, 1, strips_vertical_bad())
    return 2 * alpha * (good - bad)
