"""Velocity of a sampled scalar by adaptive singular quadrature.

The field is split into a box around the target, integrated in polar
coordinates centred at the target (the radial factor ``r^(-2 alpha)`` is
integrated exactly against the field's quadratic restriction to each ray
segment), and the remaining pieces, integrated with tensor Gauss rules and
dyadic subdivision.  Odd parities are handled through the reflection identity
``K(Rz) = det(R) R K(z)``, so only the stored quadrant is ever integrated.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .field import PieceGrid, ScalarField
from .kernels import KernelParams, free_components, ramp
from .params import StretchMap, kappa_beta, lambda_beta


class ConvergenceError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class QuadConfig:
    """Tolerances and singularity-splitting controls.

    ``split_radius`` is the half-width of the box integrated in polar
    coordinates; it is enlarged to the kernel cutoff radius when that is
    bigger.  ``angular_order`` and ``cell_order`` are the Gauss rule sizes.
    """

    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    split_radius: float = 0.05
    max_subdivisions: int = 10
    fd_step: float = 1e-3
    angular_order: int = 8
    cell_order: int = 5

    def __post_init__(self):
        if min(self.abs_tol, self.rel_tol, self.split_radius, self.fd_step) <= 0:
            raise ValueError("tolerances, split radius and fd step must be positive")
        if self.cell_order < 2 or self.angular_order < 2:
            raise ValueError("Gauss rules need at least 2 points")


@dataclass(frozen=True)
class VelocityResult:
    u: np.ndarray
    err_est: float


def _gauss(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


# radial integrals along ray segments

_G8 = _gauss(8)
_G10 = _gauss(10)


def _radial_exact(a, L, pa, pm, pb, alpha):
    """``int_a^{a+L} r^(-2 alpha) q(r) dr`` for the quadratic q through three samples.

    Uses closed-form power moments.  Accurate when ``a`` is at most a few
    segment lengths; callers switch to Gauss rules farther out.
    """
    e = -2.0 * alpha
    b = a + L
    m = []
    for j in range(3):
        p = j + 1 + e
        m.append((b**p - a**p) / p)
    m0, m1, m2 = m
    mom0 = m0 / L
    mom1 = (m1 - a * m0) / L**2
    mom2 = (m2 - 2 * a * m1 + a * a * m0) / L**3
    c1 = -3 * pa + 4 * pm - pb
    c2 = 2 * pa - 4 * pm + 2 * pb
    return L * (pa * mom0 + c1 * mom1 + c2 * mom2)


def _radial_gauss(a, L, pa, pm, pb, alpha, chi=None, rule=_G8):
    t, w = rule
    r = a[:, None] + L[:, None] * t[None, :]
    c1 = -3 * pa + 4 * pm - pb
    c2 = 2 * pa - 4 * pm + 2 * pb
    q = pa[:, None] + c1[:, None] * t + c2[:, None] * t * t
    f = r ** (-2.0 * alpha) * q
    if chi is not None:
        f = f * chi(r)
    return L * (f @ w)


def _radial(a, L, pa, pm, pb, kp: KernelParams):
    out = np.zeros_like(a)
    live = L > 0
    if kp.regularized:
        core = kp.cutoff_radius - kp.mollifier_width
        mid = a + 0.5 * L
        inner = mid < core
        ramp_seg = (mid >= core) & (mid < kp.cutoff_radius)
        live &= ~inner
        if np.any(ramp_seg & live):
            s = ramp_seg & live
            out[s] = _radial_gauss(a[s], L[s], pa[s], pm[s], pb[s], kp.alpha,
                                   chi=lambda r: ramp(kp, r), rule=_G10)
            live &= ~ramp_seg
    near = live & (a < 4.0 * L)
    far = live & ~near
    if np.any(near):
        out[near] = _radial_exact(a[near], L[near], pa[near], pm[near], pb[near], kp.alpha)
    if np.any(far):
        out[far] = _radial_gauss(a[far], L[far], pa[far], pm[far], pb[far], kp.alpha)
    return out


# polar patch

def _ray_sums(pg: PieceGrid, box, kp: KernelParams, x, phi):
    """Radial integral of ``r^(-2 alpha) chi theta`` along rays from ``x`` inside ``box``."""
    i0, i1, j0, j1 = box
    c = np.cos(phi)
    s = np.sin(phi)
    c = np.where(c == 0, 1e-300, c)
    s = np.where(s == 0, 1e-300, s)
    xs = pg.xs[i0:i1 + 1]
    ys = pg.ys[j0:j1 + 1]
    tx = (xs[None, :] - x[0]) / c[:, None]
    ty = (ys[None, :] - x[1]) / s[:, None]
    r_in = np.maximum(0.0, np.maximum(np.minimum(tx[:, 0], tx[:, -1]),
                                      np.minimum(ty[:, 0], ty[:, -1])))
    r_out = np.minimum(np.maximum(tx[:, 0], tx[:, -1]), np.maximum(ty[:, 0], ty[:, -1]))
    r_out = np.maximum(r_out, r_in)
    cuts = [tx[:, 1:-1], ty[:, 1:-1], r_in[:, None], r_out[:, None]]
    if kp.regularized:
        radii = {kp.cutoff_radius, kp.cutoff_radius - kp.mollifier_width}
        cuts.append(np.tile(np.array(sorted(radii)), (phi.size, 1)))
    T = np.concatenate(cuts, axis=1)
    T = np.clip(T, r_in[:, None], r_out[:, None])
    T.sort(axis=1)
    a = T[:, :-1]
    L = T[:, 1:] - a
    rows = np.repeat(np.arange(phi.size), a.shape[1])
    a = a.ravel()
    L = L.ravel()
    keep = L > 1e-15 * np.maximum(1.0, a)
    rows, a, L = rows[keep], a[keep], L[keep]
    cr, sr = c[rows], s[rows]
    mid = a + 0.5 * L
    p1 = x[0] + mid * cr
    p2 = x[1] + mid * sr
    ii = np.clip(np.searchsorted(pg.xs, p1) - 1, 0, pg.xs.size - 2)
    jj = np.clip(np.searchsorted(pg.ys, p2) - 1, 0, pg.ys.size - 2)
    pa = pg.evaluate(jj, ii, x[0] + a * cr, x[1] + a * sr)
    pm = pg.evaluate(jj, ii, p1, p2)
    pb = pg.evaluate(jj, ii, x[0] + (a + L) * cr, x[1] + (a + L) * sr)
    vals = _radial(a, L, pa, pm, pb, kp)
    return np.bincount(rows, weights=vals, minlength=phi.size)


def _angular_rule(pg, box, kp, x, lo, hi, n):
    t, w = _gauss(n)
    phi = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    R = _ray_sums(pg, box, kp, x, phi.ravel()).reshape(phi.shape)
    ws = (hi - lo)[:, None] * w[None, :]
    u1 = np.sum(ws * -np.sin(phi) * R, axis=1)
    u2 = np.sum(ws * np.cos(phi) * R, axis=1)
    return np.stack([u1, u2], axis=1)


def _patch(pg: PieceGrid, box, kp, x, qc: QuadConfig, tol: float):
    i0, i1, j0, j1 = box
    X, Y = np.meshgrid(pg.xs[i0:i1 + 1], pg.ys[j0:j1 + 1])
    dx, dy = (X - x[0]).ravel(), (Y - x[1]).ravel()
    scale = max(pg.xs[i1] - pg.xs[i0], pg.ys[j1] - pg.ys[j0])
    far = np.hypot(dx, dy) > 1e-13 * scale
    ang = np.arctan2(dy[far], dx[far])
    brk = np.unique(np.concatenate([[-np.pi, np.pi], ang]))
    lo, hi = brk[:-1], brk[1:]
    keep = hi - lo > 1e-15
    lo, hi = lo[keep], hi[keep]
    n = qc.angular_order
    total = np.zeros(2)
    err = 0.0
    for level in range(qc.max_subdivisions + 1):
        mid = 0.5 * (lo + hi)
        coarse = _angular_rule(pg, box, kp, x, lo, hi, n)
        fine = (_angular_rule(pg, box, kp, x, lo, mid, n)
                + _angular_rule(pg, box, kp, x, mid, hi, n))
        est = np.linalg.norm(fine - coarse, axis=1)
        done = _select_done(est, tol - err)
        if level == qc.max_subdivisions:
            done[:] = True
        total += fine[done].sum(axis=0)
        err += est[done].sum()
        if done.all():
            break
        lo, hi = np.concatenate([lo[~done], mid[~done]]), np.concatenate([mid[~done], hi[~done]])
    return total, err


def _select_done(est, budget):
    """Accept the smallest items whose summed estimate fits in half the budget."""
    order = np.argsort(est, kind="stable")
    csum = np.cumsum(est[order])
    done = np.zeros(est.size, dtype=bool)
    if csum.size and csum[-1] <= budget:
        done[:] = True
        return done
    k = int(np.searchsorted(csum, 0.5 * max(budget, 0.0), side="right"))
    done[order[:k]] = True
    return done


# far pieces

def _cell_rule(pg, kp, x, jj, ii, xa, xb, ya, yb, n):
    t, w = _gauss(n)
    hx = xb - xa
    hy = yb - ya
    P1 = xa[:, None, None] + hx[:, None, None] * t[None, None, :]
    P2 = ya[:, None, None] + hy[:, None, None] * t[None, :, None]
    P1, P2 = np.broadcast_arrays(P1, P2)
    th = pg.evaluate(jj[:, None, None], ii[:, None, None], P1, P2)
    k1, k2 = free_components(kp, x[0] - P1, x[1] - P2)
    W = (hx * hy)[:, None, None] * (w[None, :, None] * w[None, None, :])
    return np.stack([np.sum(W * k1 * th, axis=(1, 2)), np.sum(W * k2 * th, axis=(1, 2))], axis=1)


def _cells(pg, kp, x, jj, ii, xa, xb, ya, yb, qc: QuadConfig, tol: float, chunk=4096):
    total = np.zeros(2)
    err = 0.0
    n = qc.cell_order
    for level in range(qc.max_subdivisions + 1):
        vals = np.zeros((jj.size, 2))
        est = np.zeros(jj.size)
        for s in range(0, jj.size, chunk):
            sl = slice(s, s + chunk)
            args = (pg, kp, x, jj[sl], ii[sl], xa[sl], xb[sl], ya[sl], yb[sl])
            hi_ = _cell_rule(*args, n)
            lo_ = _cell_rule(*args, n - 1)
            vals[sl] = hi_
            est[sl] = np.linalg.norm(hi_ - lo_, axis=1)
        done = _select_done(est, tol - err)
        if level == qc.max_subdivisions:
            done[:] = True
        total += vals[done].sum(axis=0)
        err += est[done].sum()
        if done.all():
            break
        r = ~done
        xm, ym = 0.5 * (xa[r] + xb[r]), 0.5 * (ya[r] + yb[r])
        jj = np.tile(jj[r], 4)
        ii = np.tile(ii[r], 4)
        xa, xb = np.concatenate([xa[r], xm, xa[r], xm]), np.concatenate([xm, xb[r], xm, xb[r]])
        ya, yb = np.concatenate([ya[r], ya[r], ym, ym]), np.concatenate([ym, ym, yb[r], yb[r]])
    return total, err


# single-quadrant velocity

def _box_around(pg: PieceGrid, x, radius):
    """Index range of pieces meeting the square of half-width ``radius`` about ``x``."""
    nx, ny = pg.xs.size - 1, pg.ys.size - 1
    i0 = int(np.searchsorted(pg.xs, x[0] - radius, side="right")) - 1
    i1 = int(np.searchsorted(pg.xs, x[0] + radius, side="left"))
    j0 = int(np.searchsorted(pg.ys, x[1] - radius, side="right")) - 1
    j1 = int(np.searchsorted(pg.ys, x[1] + radius, side="left"))
    i0, j0 = max(i0, 0), max(j0, 0)
    i1, j1 = min(i1, nx), min(j1, ny)
    if i1 <= i0 or j1 <= j0:
        return None
    return i0, i1, j0, j1


def quadrant_velocity(pg: PieceGrid, kp: KernelParams, x, qc: QuadConfig, tol: float):
    """Velocity induced by the pieces alone (no images), with an error estimate."""
    x = np.asarray(x, dtype=float)
    radius = max(qc.split_radius, kp.cutoff_radius)
    box = _box_around(pg, x, radius)
    active = pg.active
    total = np.zeros(2)
    err = 0.0
    if box is not None:
        i0, i1, j0, j1 = box
        if active[j0:j1, i0:i1].any():
            pu, pe = _patch(pg, box, kp, x, qc, 0.5 * tol)
            total += pu
            err += pe
        active = active.copy()
        active[j0:j1, i0:i1] = False
    jj, ii = np.nonzero(active)
    if jj.size:
        fu, fe = _cells(pg, kp, x, jj, ii, pg.xs[ii], pg.xs[ii + 1], pg.ys[jj], pg.ys[jj + 1],
                        qc, 0.5 * tol)
        total += fu
        err += fe
    return total, err


def image_maps(field: ScalarField):
    """Reflections ``R`` with ``u(x) = sum_R R u_0(R x)`` for the field's parities."""
    maps = [np.array([1.0, 1.0])]
    if field.odd_x1:
        maps.append(np.array([-1.0, 1.0]))
    if field.odd_x2:
        maps.append(np.array([1.0, -1.0]))
    if field.odd_x1 and field.odd_x2:
        maps.append(np.array([-1.0, -1.0]))
    return maps


def velocity_at(field: ScalarField, kp: KernelParams, x, qc: QuadConfig = QuadConfig(),
                pieces: PieceGrid | None = None) -> VelocityResult:
    """Velocity at ``x`` with an adaptive error estimate.

    Raises
    ------
    ConvergenceError
        When the estimate exceeds ``max(abs_tol, rel_tol |u|)`` after the
        allowed subdivisions; the partial result is attached.
    """
    x = np.asarray(x, dtype=float)
    pg = field.pieces() if pieces is None else pieces
    maps = image_maps(field)

    def run(tol):
        u = np.zeros(2)
        e = 0.0
        for R in maps:
            ui, ei = quadrant_velocity(pg, kp, R * x, qc, tol / len(maps))
            u += R * ui
            e += ei
        return u, e

    u, e = run(qc.abs_tol)
    target = max(qc.abs_tol, qc.rel_tol * np.linalg.norm(u))
    if e > target:
        raise ConvergenceError(f"velocity error estimate {e:.3g} exceeds {target:.3g}",
                               VelocityResult(u, e))
    return VelocityResult(u, float(e))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GSQG_THREADS", "1")))
    except ValueError:
        return 1


def velocity_many(field: ScalarField, kp: KernelParams, points, qc: QuadConfig = QuadConfig()):
    """Velocities and error estimates at an (n, 2) array of targets, in input order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pg = field.pieces()
    job = lambda p: velocity_at(field, kp, p, qc, pieces=pg)
    n = _threads()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            res = list(ex.map(job, pts))
    else:
        res = [job(p) for p in pts]
    return np.array([r.u for r in res]), np.array([r.err_est for r in res])


def stretched_velocity_at(field, kp, x, qc: QuadConfig, smap: StretchMap) -> VelocityResult:
    """Velocity at the stretched point with the vertical part divided by the wall weight."""
    x = np.asarray(x, dtype=float)
    if x[1] <= 0:
        raise ValueError("stretched velocity needs x2 > 0")
    y2 = lambda_beta(smap, x[1])
    w = kappa_beta(smap.beta, y2)
    r = velocity_at(field, kp, np.array([x[0], y2]), qc)
    return VelocityResult(np.array([r.u[0], r.u[1] / w]), r.err_est / w)


# derivatives

@dataclass(frozen=True)
class GradientDiagnostic:
    x: np.ndarray
    d1u1: float
    d1u2: float
    d2u1: float
    d2u2: float
    w_d1u2: float
    w_d2u1: float
    err: np.ndarray
    one_sided: bool

    @property
    def weighted(self) -> dict:
        return {"d1u1": self.d1u1, "d1u2": self.w_d1u2 * self.d1u2,
                "d2u1": self.w_d2u1 * self.d2u1, "d2u2": self.d2u2}


def _partials(field, kp, x, qc, h, one_sided):
    u = lambda p: velocity_at(field, kp, p, qc)
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    a, b = u(x + e1), u(x - e1)
    d1 = (a.u - b.u) / (2 * h)
    q1 = (a.err_est + b.err_est) / (2 * h)
    if one_sided:
        c0, c1, c2 = u(x), u(x + e2), u(x + 2 * e2)
        d2 = (-3 * c0.u + 4 * c1.u - c2.u) / (2 * h)
        q2 = (3 * c0.err_est + 4 * c1.err_est + c2.err_est) / (2 * h)
    else:
        c, d = u(x + e2), u(x - e2)
        d2 = (c.u - d.u) / (2 * h)
        q2 = (c.err_est + d.err_est) / (2 * h)
    return d1, d2, q1, q2


def gradient_diag(field: ScalarField, kp: KernelParams, x, qc: QuadConfig = QuadConfig()) -> GradientDiagnostic:
    """Difference-quotient partials of u with their wall weights.

    Errors combine a Richardson estimate (step ``fd_step`` against
    ``2 fd_step``) with the propagated quadrature estimates.
    """
    x = np.asarray(x, dtype=float)
    h = qc.fd_step
    one_sided = x[1] < 2 * h
    if x[1] <= 0:
        raise ValueError("gradient diagnostics need x2 > 0")
    d1, d2, q1, q2 = _partials(field, kp, x, qc, h, one_sided)
    one_sided_2h = x[1] < 4 * h
    D1, D2, _, _ = _partials(field, kp, x, qc, 2 * h, one_sided_2h)
    rich1 = np.abs(d1 - D1) / 3
    rich2 = np.abs(d2 - D2) / 3
    err = np.array([rich1[0] + q1, rich1[1] + q1, rich2[0] + q2, rich2[1] + q2])
    a = kp.alpha
    return GradientDiagnostic(
        x=x, d1u1=float(d1[0]), d1u2=float(d1[1]), d2u1=float(d2[0]), d2u2=float(d2[1]),
        w_d1u2=float(max(x[1] ** (2 * a - 1), 1.0)), w_d2u1=float(min(x[1] ** (2 * a), 1.0)),
        err=err, one_sided=bool(one_sided))


def divergence_at(field, kp, x, qc: QuadConfig = QuadConfig()):
    """Returns ``(div, budget)``; the budget is the sum of the two partials' errors."""
    g = gradient_diag(field, kp, x, qc)
    return g.d1u1 + g.d2u2, float(g.err[0] + g.err[3])


def holder_seminorm_sample(field, kp, qc: QuadConfig, pairs) -> float:
    """Largest ``|u(x) - u(y)| / |x - y|^(1 - 2 alpha)`` over the given pairs."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2, 2)
    if pairs.size == 0:
        return 0.0
    U, _ = velocity_many(field, kp, pairs.reshape(-1, 2), qc)
    U = U.reshape(-1, 2, 2)
    dist = np.linalg.norm(pairs[:, 0] - pairs[:, 1], axis=1)
    if np.any(dist == 0):
        raise ValueError("pairs must be distinct points")
    q = np.linalg.norm(U[:, 0] - U[:, 1], axis=1) / dist ** (1 - 2 * kp.alpha)
    return float(q.max())


def with_tolerance(qc: QuadConfig, **kw) -> QuadConfig:
    return replace(qc, **kw)
