"""Grid-sampled scalar fields on the half-plane with odd-parity extensions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .params import Params, StretchMap, kappa_beta, lambda_beta, lambda_beta_inv

INTERPOLATIONS = ("bilinear", "nearest")


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class PieceGrid:
    """Tensor partition of the stored rectangle into pieces with bilinear data.

    Piece ``(j, i)`` covers ``[xs[i], xs[i+1]] x [ys[j], ys[j+1]]``.  The four
    corner arrays hold the values at its lower-left, lower-right, upper-left
    and upper-right corners; a piecewise-constant field has all four equal.
    """

    xs: np.ndarray
    ys: np.ndarray
    v00: np.ndarray
    v10: np.ndarray
    v01: np.ndarray
    v11: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return (self.v00 != 0) | (self.v10 != 0) | (self.v01 != 0) | (self.v11 != 0)

    def evaluate(self, j, i, x1, x2):
        """Bilinear value of piece (j, i) at points that need not lie inside it."""
        hx = self.xs[i + 1] - self.xs[i]
        hy = self.ys[j + 1] - self.ys[j]
        s = (x1 - self.xs[i]) / hx
        t = (x2 - self.ys[j]) / hy
        return ((1 - s) * (1 - t) * self.v00[j, i] + s * (1 - t) * self.v10[j, i]
                + (1 - s) * t * self.v01[j, i] + s * t * self.v11[j, i])


class ScalarField:
    """Scalar on a uniform node grid, zero outside its support box.

    Parameters
    ----------
    values : (n2, n1) array
        ``values[j, i]`` is the sample at ``(origin[0] + i*h, origin[1] + j*h)``.
    h : float
        Grid spacing, shared by both axes.
    origin : pair of float
        Lower-left node.
    support : (x1_lo, x1_hi, x2_lo, x2_hi), optional
        Box outside of which the field vanishes.  Nodes outside it are zeroed;
        nodes on an edge are zeroed too unless the edge lies on a parity axis,
        where the stored value is the one-sided limit from inside the quadrant.
    odd_x1, odd_x2 : bool
        Odd extension across ``x1 = 0`` / ``x2 = 0``.  The stored grid must then
        lie in the corresponding closed half-plane.
    interpolation : {"bilinear", "nearest"}
    """

    def __init__(self, values, h: float, origin=(0.0, 0.0), support=None,
                 odd_x1: bool = False, odd_x2: bool = False,
                 interpolation: str = "bilinear"):
        values = np.array(values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be a 2D array")
        if not h > 0:
            raise ValueError("spacing must be positive")
        if interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
        self.h = float(h)
        self.origin = (float(origin[0]), float(origin[1]))
        self.odd_x1 = bool(odd_x1)
        self.odd_x2 = bool(odd_x2)
        self.interpolation = interpolation
        n2, n1 = values.shape
        self.shape = (n2, n1)
        if self.odd_x1 and self.origin[0] < -1e-12 * self.h:
            raise ValueError("odd_x1 requires the stored grid in x1 >= 0")
        if self.odd_x2 and self.origin[1] < -1e-12 * self.h:
            raise ValueError("odd_x2 requires the stored grid in x2 >= 0")
        if support is None:
            support = (self.x1[0], self.x1[-1], self.x2[0], self.x2[-1])
        self.support = tuple(float(s) for s in support)
        values = self._mask_support(values)
        values.setflags(write=False)
        self.values = values

    # grid geometry

    @property
    def x1(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.shape[1])

    @property
    def x2(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.shape[0])

    @property
    def extent(self):
        return (self.x1[0], self.x1[-1], self.x2[0], self.x2[-1])

    def nodes(self):
        return np.meshgrid(self.x1, self.x2)

    def _mask_support(self, values):
        lo1, hi1, lo2, hi2 = self.support
        tol = 1e-9 * self.h
        X1, X2 = self.nodes()
        keep_lo1 = X1 >= lo1 - tol if (self.odd_x1 and abs(lo1) <= tol) else X1 > lo1 + tol
        keep_lo2 = X2 >= lo2 - tol if (self.odd_x2 and abs(lo2) <= tol) else X2 > lo2 + tol
        inside = keep_lo1 & keep_lo2 & (X1 < hi1 - tol) & (X2 < hi2 - tol)
        return np.where(inside, values, 0.0)

    # construction helpers

    @classmethod
    def from_function(cls, fn: Callable, h: float, extent, **kwargs) -> "ScalarField":
        """Sample ``fn(x1, x2)`` (vectorized) on nodes covering ``extent``."""
        x1lo, x1hi, x2lo, x2hi = extent
        n1 = int(round((x1hi - x1lo) / h)) + 1
        n2 = int(round((x2hi - x2lo) / h)) + 1
        X1, X2 = np.meshgrid(x1lo + h * np.arange(n1), x2lo + h * np.arange(n2))
        return cls(fn(X1, X2), h, origin=(x1lo, x2lo), **kwargs)

    def replace(self, values=None, **kwargs) -> "ScalarField":
        args = dict(values=self.values if values is None else values, h=self.h,
                    origin=self.origin, support=self.support, odd_x1=self.odd_x1,
                    odd_x2=self.odd_x2, interpolation=self.interpolation)
        args.update(kwargs)
        return ScalarField(**args)

    def scaled(self, factor: float) -> "ScalarField":
        return self.replace(values=factor * self.values)

    # evaluation

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        x1, x2 = np.broadcast_arrays(x1, x2)
        sign = np.ones(x1.shape)
        if self.odd_x1:
            sign = np.where(x1 < 0, -sign, sign)
            x1 = np.abs(x1)
        if self.odd_x2:
            sign = np.where(x2 < 0, -sign, sign)
            x2 = np.abs(x2)
        out = sign * self._interp(x1, x2)
        return float(out) if out.ndim == 0 else out

    def _interp(self, x1, x2):
        n2, n1 = self.shape
        s = (x1 - self.origin[0]) / self.h
        t = (x2 - self.origin[1]) / self.h
        tol = 1e-12
        inside = (s >= -tol) & (s <= n1 - 1 + tol) & (t >= -tol) & (t <= n2 - 1 + tol)
        lo1, hi1, lo2, hi2 = self.support
        inside &= (x1 >= lo1) & (x1 <= hi1) & (x2 >= lo2) & (x2 <= hi2)
        s = np.clip(s, 0, n1 - 1)
        t = np.clip(t, 0, n2 - 1)
        v = self.values
        if self.interpolation == "nearest":
            i = np.clip(np.floor(s + 0.5).astype(int), 0, n1 - 1)
            j = np.clip(np.floor(t + 0.5).astype(int), 0, n2 - 1)
            return np.where(inside, v[j, i], 0.0)
        i = np.clip(np.floor(s).astype(int), 0, max(n1 - 2, 0))
        j = np.clip(np.floor(t).astype(int), 0, max(n2 - 2, 0))
        fs = s - i
        ft = t - j
        i1 = np.minimum(i + 1, n1 - 1)
        j1 = np.minimum(j + 1, n2 - 1)
        val = ((1 - fs) * (1 - ft) * v[j, i] + fs * (1 - ft) * v[j, i1]
               + (1 - fs) * ft * v[j1, i] + fs * ft * v[j1, i1])
        return np.where(inside, val, 0.0)

    def pieces(self) -> PieceGrid:
        """Partition used by the quadrature engine (see :class:`PieceGrid`)."""
        v = self.values
        if self.interpolation == "bilinear":
            return PieceGrid(self.x1.copy(), self.x2.copy(),
                             v[:-1, :-1], v[:-1, 1:], v[1:, :-1], v[1:, 1:])
        # nearest: dual cells clipped to the stored rectangle
        def breaks(c):
            mid = 0.5 * (c[:-1] + c[1:])
            return np.concatenate([[c[0]], mid, [c[-1]]])
        return PieceGrid(breaks(self.x1), breaks(self.x2), v, v, v, v)

    # norms

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def l1_mass(self) -> float:
        """Trapezoid-rule integral of |theta| over the stored rectangle."""
        w1 = np.full(self.shape[1], self.h)
        w1[[0, -1]] *= 0.5
        w2 = np.full(self.shape[0], self.h)
        w2[[0, -1]] *= 0.5
        return float(w2 @ np.abs(self.values) @ w1)

    # serialization

    def header(self) -> dict:
        return {
            "origin": list(self.origin),
            "spacing": self.h,
            "dims": [self.shape[1], self.shape[0]],
            "support": list(self.support),
            "odd_x1": self.odd_x1,
            "odd_x2": self.odd_x2,
            "interpolation": self.interpolation,
            "dtype": "<f8",
            "order": "row-major, rows are x2",
        }

    def save(self, path) -> Path:
        """Write a JSON header at ``path`` and the samples to ``path`` + ``.bin``."""
        path = Path(path)
        sidecar = path.with_name(path.name + ".bin")
        head = self.header()
        head["data_file"] = sidecar.name
        path.write_text(json.dumps(head, indent=2, sort_keys=True) + "\n")
        np.ascontiguousarray(self.values, dtype="<f8").tofile(sidecar)
        return path

    @classmethod
    def load(cls, path) -> "ScalarField":
        path = Path(path)
        head = json.loads(path.read_text())
        n1, n2 = head["dims"]
        values = np.fromfile(path.with_name(head["data_file"]), dtype="<f8").reshape(n2, n1)
        return cls(values, head["spacing"], origin=head["origin"], support=head["support"],
                   odd_x1=head["odd_x1"], odd_x2=head["odd_x2"],
                   interpolation=head.get("interpolation", "bilinear"))

    def to_csv(self, path) -> None:
        X1, X2 = self.nodes()
        data = np.column_stack([X1.ravel(), X2.ravel(), self.values.ravel()])
        np.savetxt(path, data, delimiter=",", header="x1,x2,value", comments="", fmt="%.17g")


def wbeta_norm(field: ScalarField, params: Params, form: str = "sum"):
    """Sup norm and weighted Lipschitz seminorm of a sampled field.

    Centered differences at interior nodes; the wall row ``x2 = 0`` is never
    used as a centre.  ``form="sum"`` returns
    ``max|d1 theta| + max kappa|d2 theta|``; ``form="euclidean"`` returns
    ``max sqrt(d1 theta**2 + (kappa d2 theta)**2)``.

    Returns
    -------
    (sup_norm, seminorm)
    """
    n2, n1 = field.shape
    if n1 < 3 or n2 < 3:
        raise ResolutionError("need at least 3 nodes per axis")
    v = field.values
    h = field.h
    d1 = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * h)
    d2 = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * h)
    x2 = field.x2[1:-1]
    keep = x2 > 0
    w = kappa_beta(params.beta, np.where(keep, x2, 0.0))[:, None]
    d1, wd2 = np.abs(d1[keep]), np.abs((w * d2)[keep])
    sup = field.sup_norm()
    if d1.size == 0:
        return sup, 0.0
    if form == "sum":
        semi = float(d1.max() + wd2.max())
    elif form == "euclidean":
        semi = float(np.sqrt(d1**2 + wd2**2).max())
    else:
        raise ValueError("form must be 'sum' or 'euclidean'")
    return sup, semi


def stretch_field(field: ScalarField, smap: StretchMap, direction: str = "forward") -> ScalarField:
    """Resample along verticals.

    ``forward`` gives ``theta(x1, lambda(x2))`` and ``inverse`` gives
    ``theta(x1, lambda^{-1}(x2))`` on the same grid.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError("direction must be 'forward' or 'inverse'")
    if smap.beta == 0.0:
        return field.replace()
    fwd = direction == "forward"
    vmap = (lambda s: lambda_beta(smap, s)) if fwd else (lambda s: lambda_beta_inv(smap, s))
    back = (lambda s: lambda_beta_inv(smap, s)) if fwd else (lambda s: lambda_beta(smap, s))
    X1, X2 = field.nodes()
    y2 = np.sign(X2) * vmap(np.abs(X2))
    values = field(X1, y2)
    lo1, hi1, lo2, hi2 = field.support
    b = lambda s: float(np.sign(s) * back(abs(s)))
    return field.replace(values=values, support=(lo1, hi1, b(lo2), b(hi2)))
