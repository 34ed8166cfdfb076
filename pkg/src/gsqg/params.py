"""Parameters, regime classification and the boundary-stretching coordinates.

The stretching map flattens the vertical variable near the wall so that the
weighted Lipschitz class becomes plain Lipschitz regularity after a change of
variables.  Everything here is scalar-or-array in, same shape out.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class DomainError(ValueError):
    """Argument outside the domain of a coordinate map or parameter range."""


class Regime(str, Enum):
    WELL_POSED = "WELL_POSED"
    ILL_POSED_LOW = "ILL_POSED_LOW"
    ILL_POSED_HIGH = "ILL_POSED_HIGH"


@dataclass(frozen=True)
class Params:
    """Kernel exponent ``alpha`` in (0, 1/2) and wall exponent ``beta`` in [0, 1)."""

    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not np.isfinite(a) or not 0.0 < a < 0.5:
            raise DomainError(f"alpha must lie in (0, 1/2), got {self.alpha!r}")
        if not np.isfinite(b) or not 0.0 <= b < 1.0:
            raise DomainError(f"beta must lie in [0, 1), got {self.beta!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def regime(self) -> Regime:
        return classify(self)


def classify(params: Params) -> Regime:
    a, b = params.alpha, params.beta
    if b < 2 * a:
        return Regime.ILL_POSED_LOW
    if b > 1 - 2 * a:
        return Regime.ILL_POSED_HIGH
    # here 2a <= b <= 1 - 2a, which already forces a <= 1/4
    return Regime.WELL_POSED


def _nonneg(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError(f"{name} must be non-negative")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def kappa_beta(beta: float, x2):
    """Wall weight ``min(x2**beta, 1)``."""
    x2 = _nonneg(x2, "x2")
    return _out(np.minimum(np.power(x2, beta), 1.0))


@dataclass(frozen=True)
class StretchMap:
    """Vertical stretching with a power branch below ``matching_point`` and a shift above."""

    beta: float

    def __post_init__(self):
        b = float(self.beta)
        if not 0.0 <= b < 1.0:
            raise DomainError(f"beta must lie in [0, 1), got {self.beta!r}")
        object.__setattr__(self, "beta", b)

    @property
    def matching_point(self) -> float:
        return 1.0 / (1.0 - self.beta)

    @property
    def prefactor(self) -> float:
        return (1.0 - self.beta) ** (1.0 / (1.0 - self.beta))

    def forward(self, x2):
        return lambda_beta(self, x2)

    def inverse(self, y2):
        return lambda_beta_inv(self, y2)

    def derivative(self, x2):
        """Exact derivative, equal to the wall weight at the image point."""
        return kappa_beta(self.beta, lambda_beta(self, x2))


def lambda_beta(smap: StretchMap, x2):
    x2 = _nonneg(x2, "x2")
    b = smap.beta
    if b == 0.0:
        return _out(x2.copy())
    low = smap.prefactor * np.power(x2, 1.0 / (1.0 - b))
    high = x2 - b / (1.0 - b)
    return _out(np.where(x2 < smap.matching_point, low, high))


def lambda_beta_inv(smap: StretchMap, y2):
    """Inverse of :func:`lambda_beta`.  The image of the matching point is 1."""
    y2 = _nonneg(y2, "y2")
    b = smap.beta
    if b == 0.0:
        return _out(y2.copy())
    low = np.power(y2, 1.0 - b) / (1.0 - b)
    high = y2 + b / (1.0 - b)
    return _out(np.where(y2 < 1.0, low, high))


def stretch_point(smap: StretchMap, x):
    """Apply the map to the second coordinate of a point or an (n, 2) array."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    out[..., 1] = lambda_beta(smap, np.abs(x[..., 1])) * np.sign(x[..., 1])
    return out


def unstretch_point(smap: StretchMap, y):
    y = np.asarray(y, dtype=float)
    out = y.copy()
    out[..., 1] = lambda_beta_inv(smap, np.abs(y[..., 1])) * np.sign(y[..., 1])
    return out
