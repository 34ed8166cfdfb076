"""Independent velocity evaluation for data odd in both variables.

Integrates the four-term quadrant kernels over the stored quadrant only.
Pieces close to the target are handled by scipy's nested adaptive quadrature
(split at the target's coordinates), the rest by fixed tensor Gauss rules.
It shares no quadrature code with :mod:`gsqg.velocity` and serves as its
cross-check.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import dblquad

from .field import ScalarField
from .kernels import KernelParams, k1, k2


def _pair_scalar(alpha, x1, x2, y1, y2):
    p = -(1.0 + alpha)

    def w(a, b):
        return (a * a + b * b) ** p

    a, b, c, d = x1 - y1, x1 + y1, x2 - y2, x2 + y2
    wac, wbc, wad, wbd = w(a, c), w(b, c), w(a, d), w(b, d)
    u1 = c * wac - c * wbc - d * wad + d * wbd
    u2 = -a * wac + a * wad + b * wbc - b * wbd
    return u1, u2


def _gauss_pieces(field, kp, x, jj, ii, n=8, split=1):
    pg = field.pieces()
    t, w = np.polynomial.legendre.leggauss(n)
    t, w = 0.5 * (t + 1), 0.5 * w
    total = np.zeros(2)
    for sy in range(split):
        for sx in range(split):
            xa = pg.xs[ii] + (pg.xs[ii + 1] - pg.xs[ii]) * sx / split
            ya = pg.ys[jj] + (pg.ys[jj + 1] - pg.ys[jj]) * sy / split
            hx = (pg.xs[ii + 1] - pg.xs[ii]) / split
            hy = (pg.ys[jj + 1] - pg.ys[jj]) / split
            P1 = xa[:, None, None] + hx[:, None, None] * t[None, None, :]
            P2 = ya[:, None, None] + hy[:, None, None] * t[None, :, None]
            P1, P2 = np.broadcast_arrays(P1, P2)
            th = pg.evaluate(jj[:, None, None], ii[:, None, None], P1, P2)
            Y = np.stack([P1, P2], axis=-1)
            W = (hx * hy)[:, None, None] * w[None, :, None] * w[None, None, :]
            total[0] += np.sum(W * th * k1(kp, x, Y))
            total[1] += np.sum(W * th * k2(kp, x, Y))
    return total


def reduced_velocity_at(field: ScalarField, kp: KernelParams, x, near: float = 1.5,
                        epsabs: float = 1e-12, epsrel: float = 1e-10) -> np.ndarray:
    """Velocity from the quadrant kernels; ``near`` is in units of the piece size."""
    if not (field.odd_x1 and field.odd_x2):
        raise ValueError("the quadrant form needs data odd in both variables")
    if kp.regularized:
        raise ValueError("the quadrant oracle is for the exact kernel")
    x = np.asarray(x, dtype=float)
    pg = field.pieces()
    act = pg.active
    jj, ii = np.nonzero(act)
    size = np.maximum(pg.xs[ii + 1] - pg.xs[ii], pg.ys[jj + 1] - pg.ys[jj])
    # distance (in piece sizes) from each piece to the target and its reflections;
    # every one of them is a singular point of some kernel term
    dist = np.full(jj.size, np.inf)
    for r1, r2 in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        px, py = r1 * x[0], r2 * x[1]
        cx = np.clip(px, pg.xs[ii], pg.xs[ii + 1])
        cy = np.clip(py, pg.ys[jj], pg.ys[jj + 1])
        dist = np.minimum(dist, np.hypot(cx - px, cy - py) / size)
    close = dist < near
    mid = (~close) & (dist < 4 * near)
    far = ~close & ~mid
    u = np.zeros(2)
    if far.any():
        u += _gauss_pieces(field, kp, x, jj[far], ii[far], n=8, split=1)
    if mid.any():
        u += _gauss_pieces(field, kp, x, jj[mid], ii[mid], n=8, split=2)
    a = kp.alpha
    for j, i in zip(jj[close], ii[close]):
        xcuts = [pg.xs[i], pg.xs[i + 1]]
        ycuts = [pg.ys[j], pg.ys[j + 1]]
        if xcuts[0] < x[0] < xcuts[1]:
            xcuts.insert(1, x[0])
        if ycuts[0] < x[1] < ycuts[1]:
            ycuts.insert(1, x[1])
        c = (pg.v00[j, i], pg.v10[j, i], pg.v01[j, i], pg.v11[j, i])
        hx, hy = pg.xs[i + 1] - pg.xs[i], pg.ys[j + 1] - pg.ys[j]
        X0, Y0 = pg.xs[i], pg.ys[j]

        def theta(y1, y2):
            s, t = (y1 - X0) / hx, (y2 - Y0) / hy
            return (1 - s) * (1 - t) * c[0] + s * (1 - t) * c[1] + (1 - s) * t * c[2] + s * t * c[3]

        for comp in (0, 1):
            f = lambda y2, y1: _pair_scalar(a, x[0], x[1], y1, y2)[comp] * theta(y1, y2)
            for xa, xb in zip(xcuts[:-1], xcuts[1:]):
                for ya, yb in zip(ycuts[:-1], ycuts[1:]):
                    if x[0] in (xa, xb) and x[1] in (ya, yb):
                        u[comp] += _corner_polar(a, comp, theta, x, xa, xb, ya, yb,
                                                 epsabs, epsrel)
                    else:
                        u[comp] += dblquad(f, xa, xb, ya, yb, epsabs=epsabs, epsrel=epsrel)[0]
    return u


def _corner_polar(alpha, comp, theta, x, xa, xb, ya, yb, epsabs, epsrel):
    # rectangle with the target at a corner: polar coordinates about the corner
    # and r = s**2 leave a bounded integrand; the direct term is written in polar
    # form so that rounding of y back onto x cannot produce 0 * inf
    sx = 1.0 if xa == x[0] else -1.0
    sy = 1.0 if ya == x[1] else -1.0
    lx, ly = xb - xa, yb - ya
    split = np.arctan2(ly, lx)
    p = -(1.0 + alpha)

    def g(s, phi):
        r = s * s
        d1, d2 = sx * r * np.cos(phi), sy * r * np.sin(phi)
        y1, y2 = x[0] + d1, x[1] + d2
        b, d = x[0] + y1, x[1] + y2
        wbc, wad, wbd = (b * b + d2 * d2) ** p, (d1 * d1 + d * d) ** p, (b * b + d * d) ** p
        # direct term times the area factor 2 s r, with |y - x| = r
        if comp == 0:
            direct = -sy * np.sin(phi) * 2 * s ** (1 - 4 * alpha)
            rest = d2 * wbc - d * wad + d * wbd
        else:
            direct = sx * np.cos(phi) * 2 * s ** (1 - 4 * alpha)
            rest = -d1 * wad + b * wbc - b * wbd
        return (direct + 2 * s * r * rest) * theta(y1, y2)

    lo = dblquad(g, 0.0, split, 0.0, lambda phi: np.sqrt(lx / np.cos(phi)),
                 epsabs=epsabs, epsrel=epsrel)[0]
    hi = dblquad(g, split, np.pi / 2, 0.0, lambda phi: np.sqrt(ly / np.sin(phi)),
                 epsabs=epsabs, epsrel=epsrel)[0]
    return lo + hi
