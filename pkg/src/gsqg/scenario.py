"""Blow-up and ill-posedness scenarios: initial data, advection and monitors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from .field import ResolutionError, ScalarField
from .gridvel import GridVelocity
from .kernels import KernelParams
from .params import Params, Regime, StretchMap, kappa_beta, lambda_beta, lambda_beta_inv
from .velocity import QuadConfig, velocity_many


class GeometryError(ValueError):
    """Scenario geometry is inconsistent (overlapping caps, ramps too wide, ...)."""


class CFLWarning(UserWarning):
    pass


EPS_MAX = 0.1
# below this height the vertical shear of the high-regularity data is lost in roundoff
MIN_RESOLVED_HEIGHT = 1e-6


# blow-up scenario

@dataclass(frozen=True)
class Trapezoid:
    X: float
    right: float = 1.0

    def contains(self, x1, x2):
        x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
        return (x1 > self.X) & (x1 < self.right) & (x2 > 0) & (x2 < x1)

    def vertices(self) -> np.ndarray:
        X, R = self.X, self.right
        return np.array([[X, 0.0], [R, 0.0], [R, R], [X, X]])

    def distance(self, pts) -> np.ndarray:
        """Euclidean distance from each point of an (n, 2) array to the closed trapezoid."""
        P = np.asarray(pts, float).reshape(-1, 2)
        V = self.vertices()
        d = np.full(len(P), np.inf)
        for a, b in zip(V, np.roll(V, -1, axis=0)):
            e = b - a
            ee = e @ e
            s = np.zeros(len(P)) if ee == 0 else np.clip((P - a) @ e / ee, 0.0, 1.0)
            d = np.minimum(d, np.linalg.norm(P - (a + s[:, None] * e), axis=1))
        X, R = self.X, self.right
        inside = (P[:, 0] >= X) & (P[:, 0] <= R) & (P[:, 1] >= 0) & (P[:, 1] <= P[:, 0])
        return np.where(inside, 0.0, d)


@dataclass(frozen=True)
class BlowupScenario:
    """Shrinking-trapezoid barrier setup.  ``eps_prime`` caps the diagonal probe segment."""

    epsilon: float
    params: Params
    eps_prime: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.epsilon <= EPS_MAX:
            raise GeometryError(f"epsilon must lie in (0, {EPS_MAX}]")
        if not 0.0 < self.eps_prime < 1.0:
            raise GeometryError("eps_prime must lie in (0, 1)")
        if self.params.alpha <= 0:
            raise GeometryError("the barrier speed needs alpha > 0")

    @property
    def alpha(self) -> float:
        return self.params.alpha

    @property
    def T_eps(self) -> float:
        return 25.0 * (3 * self.epsilon) ** (2 * self.alpha)

    @property
    def omega(self):
        return (self.epsilon, 3.0, 0.0, 3.0)

    @property
    def omega_prime(self):
        return (2 * self.epsilon, 2.0, 0.0, 2.0)

    def X(self, t):
        a2 = 2 * self.alpha
        base = np.maximum((3 * self.epsilon) ** a2 - np.asarray(t, float) / 25.0, 0.0)
        out = base ** (1.0 / a2)
        return float(out) if np.ndim(out) == 0 else out

    def dXdt(self, t):
        X = np.asarray(self.X(t))
        out = -(X ** (1 - 2 * self.alpha)) / (50 * self.alpha)
        return float(out) if np.ndim(out) == 0 else out

    def barrier_speed(self, X) -> float:
        return (np.asarray(X, float) ** (1 - 2 * self.alpha)) / (45 * self.alpha)

    def trapezoid(self, t) -> Trapezoid:
        return Trapezoid(self.X(t))

    def probes(self, t, n: int = 64):
        """Probe points on the vertical segment I_t and the diagonal segment J_t.

        J_t is empty once X_t exceeds ``eps_prime``; repeated points are dropped.
        """
        X = self.X(t)
        s = np.linspace(0.0, X, n)
        I = np.column_stack([np.full(n, X), s])
        if X > self.eps_prime * (1 + 1e-12):
            J = np.zeros((0, 2))
        else:
            s = np.unique(np.linspace(X, max(X, self.eps_prime), n))
            J = np.column_stack([s, s])
        return I, J


def integrate_X(sc: BlowupScenario, T: float, dt: float):
    """RK4 for the barrier ODE, for checking the closed form."""
    f = lambda X: -(max(X, 0.0) ** (1 - 2 * sc.alpha)) / (50 * sc.alpha)
    n = int(np.ceil(T / dt - 1e-9))
    ts = np.linspace(0.0, n * dt, n + 1)
    Xs = np.empty(n + 1)
    Xs[0] = 3 * sc.epsilon
    for k in range(n):
        X = Xs[k]
        k1 = f(X)
        k2 = f(X + 0.5 * dt * k1)
        k3 = f(X + 0.5 * dt * k2)
        k4 = f(X + dt * k3)
        Xs[k + 1] = X + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return ts, Xs


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def blowup_profile(sc: BlowupScenario, smoothing_width: float, outer_width: float = 0.5):
    """The datum as a callable on the closed quadrant.

    The left ramp (width ``smoothing_width``) is centred at 1.5 eps; the right
    and top ramps (width ``outer_width``) are centred at 2.5.
    """
    eps = sc.epsilon
    if not 0 < smoothing_width < eps:
        raise GeometryError("smoothing width must lie in (0, epsilon)")
    if not 0 < outer_width < 1:
        raise GeometryError("outer ramp width must lie in (0, 1)")
    w, wo = smoothing_width, outer_width

    def theta(x1, x2):
        x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
        left = smoothstep((x1 - (1.5 * eps - 0.5 * w)) / w)
        right = 1 - smoothstep((x1 - (2.5 - 0.5 * wo)) / wo)
        top = 1 - smoothstep((x2 - (2.5 - 0.5 * wo)) / wo)
        return left * right * top * (x2 >= 0)

    return theta


def default_smoothing(sc: BlowupScenario, h: float) -> float:
    """Widest left ramp whose bilinear interpolant still satisfies the sandwich bounds."""
    w = sc.epsilon - 2 * h
    if w <= 0:
        raise GeometryError("grid too coarse for epsilon: need h < epsilon / 2")
    return w


def build_blowup_datum(sc: BlowupScenario, smoothing_width: float | None = None,
                       h: float = 0.0125, box: float = 3.2) -> ScalarField:
    """Odd-odd datum on ``[0, box]^2``; equal to 1 on the inner box, 0 outside the outer one."""
    if smoothing_width is None:
        smoothing_width = default_smoothing(sc, h)
    if smoothing_width > sc.epsilon - 2 * h + 1e-12:
        warnings.warn("the left ramp is narrower than two cells; the interpolant may "
                      "violate the sandwich bounds", stacklevel=2)
    fn = blowup_profile(sc, smoothing_width)
    if box < 3.0:
        raise GeometryError("the grid must cover the outer rectangle")
    return ScalarField.from_function(fn, h, (0.0, box, 0.0, box), odd_x1=True, odd_x2=True)


def sandwich_violations(theta, sc: BlowupScenario, n: int = 10_000, seed: int = 0, tol=1e-12):
    """Count sampled points where ``1_{inner} <= theta <= 1_{outer}`` fails."""
    rng = np.random.default_rng(seed)
    P = rng.uniform(0.0, 3.2, size=(n, 2))
    v = np.asarray(theta(P[:, 0], P[:, 1]))
    a1, b1, a2, b2 = sc.omega
    c1, d1, c2, d2 = sc.omega_prime
    in_outer = (P[:, 0] > a1) & (P[:, 0] < b1) & (P[:, 1] > a2) & (P[:, 1] < b2)
    in_inner = (P[:, 0] > c1) & (P[:, 0] < d1) & (P[:, 1] > c2) & (P[:, 1] < d2)
    lower = np.where(in_inner, 1.0, 0.0)
    upper = np.where(in_outer, 1.0, 0.0)
    return int(np.sum((v < lower - tol) | (v > upper + tol)))


# ill-posedness data

def tent(r):
    """``max(0, 1 - r)``."""
    return np.maximum(0.0, 1.0 - r)


def _plateau(x1, x2, lo1, hi1, lo2, hi2):
    d = np.minimum.reduce([x1 - lo1, hi1 - x1, x2 - lo2, hi2 - x2])
    return np.clip(d, 0.0, 1.0)


@dataclass(frozen=True)
class IllposedSpecLow:
    """Bottom-wall caps on a plateau, for ``beta < 2 alpha``.

    Cap ``n`` sits at height ``2^(-4n)`` on the x2-axis in stretched
    coordinates, with radius and height ``a_n``.
    """

    alpha: float
    beta: float = 0.0
    a: float = 1.0
    n_max: int = 4
    h: float = 0.1

    def __post_init__(self):
        p = Params(self.alpha, self.beta)
        if p.regime is not Regime.ILL_POSED_LOW:
            raise GeometryError("the low-regularity data need beta < 2 alpha")
        if self.alpha >= 0.5:
            raise GeometryError("alpha must be below 1/2")
        if not self.a > 0 or self.n_max < 1:
            raise GeometryError("need a > 0 and n_max >= 1")
        for n in range(1, self.n_max + 1):
            if self.a_n(n) > 2.0 ** (-4 * n - 1):
                raise GeometryError(f"cap {n} too wide: a_n > 2^(-4n-1); decrease a")
            if self.probe_pair(n)[1][1] <= 0:
                raise GeometryError(f"probe pair {n} leaves the half-plane")

    @property
    def smap(self) -> StretchMap:
        return StretchMap(self.beta)

    def a_n(self, n: int) -> float:
        return self.a * 2.0 ** (-8 * n / (1 - 2 * self.alpha) ** 2)

    def b_n(self, n: int) -> float:
        return 2.0 ** (-2 * (2 * self.alpha + self.beta) * n / (1 - self.beta)) * self.a_n(n)

    def center(self, n: int):
        return (0.0, 2.0 ** (-4 * n))

    def probe_pair(self, n: int):
        y2 = lambda_beta(self.smap, 2.0 ** (-4 * n))
        return np.array([0.0, y2]), np.array([self.a_n(n), y2 - 2 * self.b_n(n)])

    def probe_values(self, n: int):
        return 1.0 + self.a_n(n), 1.0

    def relative_jump(self, n: int) -> float:
        """``|theta(y_n) - theta(y_n')| / a_n``."""
        return 1.0

    def relative_separation(self, n: int):
        """``(y_n' - y_n) / a_n`` without the cancellation of forming the difference."""
        return np.array([1.0, -2 * self.b_n(n) / self.a_n(n)])

    def stretched_separation(self, n: int):
        """Separation of the pair in stretched coordinates, divided by ``a_n`` (to first order)."""
        d = self.relative_separation(n)
        w = self.smap.derivative(2.0 ** (-4 * n))
        return np.array([d[0], d[1] / w])

    @property
    def plateau_box(self):
        return (-3.0, 3.0, -1.0, 2.0 + 1.0 / (1 - self.beta))

    def theta_tilde(self, x1, x2):
        """Datum in stretched coordinates (upper half-plane; odd in x2)."""
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        sgn = np.sign(x2)
        y2 = np.abs(x2)
        out = _plateau(x1, y2, *self.plateau_box)
        for n in range(1, self.n_max + 1):
            c1, c2 = self.center(n)
            an = self.a_n(n)
            out = out + an * tent(np.hypot(x1 - c1, y2 - c2) / an)
        return sgn * out

    def theta(self, x1, x2):
        x2 = np.asarray(x2, float)
        y = lambda_beta_inv(self.smap, np.abs(x2)) * np.sign(x2)
        return self.theta_tilde(x1, y)

    def caps_disjoint(self) -> bool:
        for n in range(1, self.n_max):
            if self.center(n)[1] - self.a_n(n) < self.center(n + 1)[1] + self.a_n(n + 1):
                return False
        top = self.center(1)[1] + self.a_n(1)
        return top <= 1.0


@dataclass(frozen=True)
class IllposedSpecHigh:
    """Slanted caps of height ``a_n / n`` next to a plateau in ``x1 < 0``, for ``beta > 1 - 2 alpha``.

    ``a_n = 2^(-gamma n)``; the caps are centred at ``(lambda(2^(-4n)), 2^(-4n))``
    in stretched coordinates and the sum is truncated at ``n0``.  With
    ``gamma=None`` the smallest integer keeping every cap clear of the axes is used.
    """

    alpha: float
    beta: float
    gamma: float | None = None
    n0: int = 3
    h: float = 0.1

    def __post_init__(self):
        p = Params(self.alpha, self.beta)
        if p.regime is not Regime.ILL_POSED_HIGH or self.beta < 2 * self.alpha:
            raise GeometryError("the high-regularity data need beta > 1 - 2 alpha and beta >= 2 alpha")
        if self.alpha >= 0.5:
            raise GeometryError("alpha must be below 1/2")
        if self.n0 < 1:
            raise GeometryError("need n0 >= 1")
        if self.gamma is None:
            object.__setattr__(self, "gamma", float(self.smallest_gamma(self.beta, self.n0)))
        for n in range(1, self.n0 + 1):
            an = self.a_n(n)
            if an > 2.0 ** (-4 * n - 1) or an > lambda_beta(self.smap, 2.0 ** (-4 * n)):
                raise GeometryError(f"cap {n} too wide; increase gamma")

    @property
    def smap(self) -> StretchMap:
        return StretchMap(self.beta)

    @staticmethod
    def smallest_gamma(beta: float, n0: int) -> int:
        smap = StretchMap(beta)
        need = max(max(4 * n + 1, -np.log2(lambda_beta(smap, 2.0 ** (-4 * n)))) / n
                   for n in range(1, n0 + 1))
        return int(np.ceil(need))

    def a_n(self, n: int) -> float:
        return 2.0 ** (-self.gamma * n)

    def center(self, n: int):
        return (lambda_beta(self.smap, 2.0 ** (-4 * n)), 2.0 ** (-4 * n))

    def probe_pair(self, n: int | None = None):
        n = self.n0 if n is None else n
        a = self.a_n(n)
        y1 = lambda_beta(self.smap, 2.0 ** (-4 * n))
        y = np.array([y1, y1])
        y_prime = np.array([y1 + 2 * a / n**2, lambda_beta(self.smap, 2.0 ** (-4 * n) - a)])
        return y, y_prime

    def probe_values(self, n: int | None = None):
        n = self.n0 if n is None else n
        return self.a_n(n) / n, 0.0

    def relative_jump(self, n: int | None = None) -> float:
        return 1.0 / (self.n0 if n is None else n)

    def relative_separation(self, n: int | None = None):
        n = self.n0 if n is None else n
        a, s = self.a_n(n), 2.0 ** (-4 * n)
        return np.array([2.0 / n**2, (lambda_beta(self.smap, s - a) - lambda_beta(self.smap, s)) / a])

    def stretched_separation(self, n: int | None = None):
        n = self.n0 if n is None else n
        return np.array([2.0 / n**2, -1.0])

    plateau_box = (-3.0, 0.0, 0.0, 3.0)

    def caps(self, x1, x2, n_terms: int | None = None):
        """Cap series in stretched coordinates."""
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        out = np.zeros(x1.shape)
        for n in range(1, (self.n0 if n_terms is None else n_terms) + 1):
            c1, c2 = self.center(n)
            an = self.a_n(n)
            out = out + an / n * tent(np.hypot(x1 - c1, x2 - c2) / an)
        return out

    def theta_tilde(self, x1, x2, n_terms: int | None = None):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        sgn = np.sign(x2)
        y2 = np.abs(x2)
        plate = _plateau(x1, lambda_beta(self.smap, y2), *self.plateau_box)
        return sgn * (plate + self.caps(x1, y2, n_terms))

    def theta(self, x1, x2, n_terms: int | None = None):
        x2 = np.asarray(x2, float)
        y = lambda_beta_inv(self.smap, np.abs(x2)) * np.sign(x2)
        return self.theta_tilde(x1, y, n_terms)

    def caps_disjoint(self) -> bool:
        for n in range(1, self.n0):
            c, d = np.array(self.center(n)), np.array(self.center(n + 1))
            if np.hypot(*(c - d)) < self.a_n(n) + self.a_n(n + 1):
                return False
        return True


def build_illposed_low(setup: IllposedSpecLow) -> ScalarField:
    """Grid samples of the plateau part of the datum (odd in x2).

    The caps are far below any practical grid spacing; they live only in the
    analytic ``setup.theta`` / ``setup.theta_tilde``.
    """
    if not setup.caps_disjoint():
        raise GeometryError("caps overlap")
    top = lambda_beta(setup.smap, setup.plateau_box[3])
    h = setup.h
    ext = (-3.0, 3.0, 0.0, h * np.ceil(top / h))
    fn = lambda x1, x2: _plateau(x1, lambda_beta_inv(setup.smap, x2), *setup.plateau_box)
    return ScalarField.from_function(fn, h, ext, odd_x2=True,
                                     support=(-3.0, 3.0, 0.0, top))


def build_illposed_high(setup: IllposedSpecHigh) -> ScalarField:
    """Grid samples of the plateau part (in ``x1 < 0``, odd in x2); caps as in the low case."""
    if not setup.caps_disjoint():
        raise GeometryError("caps overlap")
    h = setup.h
    fn = lambda x1, x2: _plateau(x1, x2, *setup.plateau_box)
    return ScalarField.from_function(fn, h, (-3.0, 1.0, 0.0, 3.0), odd_x2=True,
                                     support=(-3.0, 0.0, 0.0, 3.0))


def lipschitz_sample(fn, box, n: int = 20_000, seed: int = 0, max_step: float = 1e-3):
    """Largest difference quotient of ``fn`` over random nearby pairs inside ``box``."""
    rng = np.random.default_rng(seed)
    lo1, hi1, lo2, hi2 = box
    P = np.column_stack([rng.uniform(lo1, hi1, n), rng.uniform(lo2, hi2, n)])
    D = rng.normal(size=(n, 2))
    D *= (max_step * rng.uniform(0.01, 1.0, n) / np.linalg.norm(D, axis=1))[:, None]
    Q = np.clip(P + D, [lo1, lo2], [hi1, hi2])
    dist = np.linalg.norm(Q - P, axis=1)
    ok = dist > 0
    diff = np.abs(fn(Q[ok, 0], Q[ok, 1]) - fn(P[ok, 0], P[ok, 1]))
    return float(np.max(diff / dist[ok]))


# advection

@dataclass
class ParticleSet:
    labels: list
    x0: np.ndarray
    values: np.ndarray
    x: np.ndarray = None
    exited: np.ndarray = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, float).reshape(-1, 2)
        self.values = np.asarray(self.values, float).reshape(-1)
        if len(self.labels) != len(self.x0) or len(self.values) != len(self.x0):
            raise ValueError("labels, positions and values must have equal length")
        self.x = self.x0.copy() if self.x is None else np.asarray(self.x, float)
        self.exited = np.zeros(len(self.x0), bool) if self.exited is None else self.exited

    @classmethod
    def from_field(cls, field: ScalarField, points, labels=None):
        P = np.asarray(points, float).reshape(-1, 2)
        labels = list(range(len(P))) if labels is None else list(labels)
        return cls(labels, P, field(P[:, 0], P[:, 1]))

    def quadrant_violations(self) -> int:
        inside0 = (self.x0[:, 0] > 0) & (self.x0[:, 1] > 0)
        return int(np.sum(inside0 & ((self.x[:, 0] < 0) | (self.x[:, 1] < 0))))


@dataclass
class TrajectoryRecord:
    mode: str
    times: list = dc_field(default_factory=list)
    positions: list = dc_field(default_factory=list)
    snapshots: list = dc_field(default_factory=list)
    snapshot_times: list = dc_field(default_factory=list)
    sup_norm: list = dc_field(default_factory=list)
    mass: list = dc_field(default_factory=list)
    max_speed: list = dc_field(default_factory=list)
    node_velocity: list = dc_field(default_factory=list)
    cfl_violations: int = 0
    exits: list = dc_field(default_factory=list)
    final_field: ScalarField | None = None
    stopped_early: bool = False

    def summary(self) -> dict:
        s0, m0 = self.sup_norm[0], self.mass[0]
        return {
            "mode": self.mode,
            "steps": len(self.times) - 1,
            "t_final": self.times[-1],
            "sup_drift": abs(self.sup_norm[-1] - s0) / s0 if s0 else 0.0,
            "mass_drift": abs(self.mass[-1] - m0) / m0 if m0 else 0.0,
            "max_speed": max(self.max_speed) if self.max_speed else 0.0,
            "cfl_violations": self.cfl_violations,
            "exits": len(self.exits),
            "stopped_early": self.stopped_early,
        }


def _interp_nodes(U, h, L, P):
    """Bilinear interpolation of node vectors on ``[0, L]^2`` at points clamped to it."""
    n = U.shape[0]
    s = np.clip(P[:, 0], 0.0, L) / h
    t = np.clip(P[:, 1], 0.0, L) / h
    i = np.clip(np.floor(s).astype(int), 0, n - 2)
    j = np.clip(np.floor(t).astype(int), 0, n - 2)
    fs, ft = (s - i)[:, None], (t - j)[:, None]
    return ((1 - fs) * (1 - ft) * U[j, i] + fs * (1 - ft) * U[j, i + 1]
            + (1 - fs) * ft * U[j + 1, i] + fs * ft * U[j + 1, i + 1])


def _remap(values, h, P, scheme):
    """Field values at departure points ``P`` (inside the stored grid).

    ``cubic`` is a cubic spline clipped to the range of the enclosing cell's
    nodes, so no new extrema appear.  Edge-constant extension matches the
    one-sided wall values stored on the parity axes.
    """
    n2, n1 = values.shape
    s = P[:, 0] / h
    t = P[:, 1] / h
    if scheme == "bilinear":
        return map_coordinates(values, [t, s], order=1, mode="nearest")
    coef = spline_filter(values, order=3, mode="nearest")
    out = map_coordinates(coef, [t, s], order=3, mode="nearest", prefilter=False)
    i = np.clip(np.floor(s).astype(int), 0, n1 - 2)
    j = np.clip(np.floor(t).astype(int), 0, n2 - 2)
    corners = np.stack([values[j, i], values[j, i + 1], values[j + 1, i], values[j + 1, i + 1]])
    return np.clip(out, corners.min(axis=0), corners.max(axis=0))


def _rk4(vel, P, dt):
    k1 = vel(P)
    k2 = vel(P + 0.5 * dt * k1)
    k3 = vel(P + 0.5 * dt * k2)
    k4 = vel(P + dt * k3)
    return P + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6


def _track_exits(particles: ParticleSet, box, t, record, odd):
    lo1, hi1, lo2, hi2 = box
    if odd[0]:
        lo1 = -hi1
    if odd[1]:
        lo2 = -hi2
    X = particles.x
    out = (X[:, 0] < lo1) | (X[:, 0] > hi1) | (X[:, 1] < lo2) | (X[:, 1] > hi2)
    for k in np.nonzero(out & ~particles.exited)[0]:
        record.exits.append({"label": particles.labels[k], "t": float(t)})
    particles.exited |= out


def advect(field0: ScalarField, kp: KernelParams, qc: QuadConfig, particles: ParticleSet | None,
           T: float, dt: float, field_update: str = "frozen", snapshot_every: int = 0,
           grid_velocity: GridVelocity | None = None, callback=None,
           remap: str = "cubic") -> TrajectoryRecord:
    """Transport particles (and, in ``recomputed`` mode, the field) for time ``T``.

    ``frozen`` moves particles with the t = 0 velocity evaluated by adaptive
    quadrature.  ``recomputed`` is a semi-Lagrangian scheme on the stored grid:
    each step computes node velocities of the current field, traces departure
    points backwards with RK4 and interpolates.  It needs an odd-odd field on
    a square grid anchored at the origin; ``remap`` picks the interpolation
    (``cubic`` or ``bilinear``).  ``callback(t, field, U)`` runs after every
    step in recomputed mode; returning ``True`` ends the run at that step.
    """
    if not dt > 0 or not T >= dt * (1 - 1e-12):
        raise ValueError("need dt > 0 and T >= dt")
    if field_update not in ("frozen", "recomputed"):
        raise ValueError("field_update must be 'frozen' or 'recomputed'")
    if remap not in ("cubic", "bilinear"):
        raise ValueError("remap must be 'cubic' or 'bilinear'")
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1):
        nsteps = int(np.ceil(T / dt))
        dt = T / nsteps
    rec = TrajectoryRecord(field_update)
    odd = (field0.odd_x1, field0.odd_x2)
    box = field0.extent
    if particles is None:
        particles = ParticleSet([], np.zeros((0, 2)), np.zeros(0))

    def log(t, field, speed):
        rec.times.append(float(t))
        rec.positions.append(particles.x.copy())
        rec.sup_norm.append(field.sup_norm())
        rec.mass.append(field.l1_mass())
        rec.max_speed.append(float(speed))

    if field_update == "frozen":
        def vel(P):
            if len(P) == 0:
                return np.zeros((0, 2))
            return velocity_many(field0, kp, P, qc)[0]

        log(0.0, field0, 0.0)
        for k in range(nsteps):
            live = ~particles.exited
            if live.any():
                particles.x[live] = _rk4(vel, particles.x[live], dt)
            _track_exits(particles, box, (k + 1) * dt, rec, odd)
            log((k + 1) * dt, field0, 0.0)
        return rec

    if not (field0.odd_x1 and field0.odd_x2) or field0.origin != (0.0, 0.0) \
            or field0.shape[0] != field0.shape[1]:
        raise ValueError("recomputed mode needs an odd-odd square grid anchored at the origin")
    h = field0.h
    n = field0.shape[0]
    L = (n - 1) * h
    G = grid_velocity or GridVelocity(kp, h, n)
    X1, X2 = field0.nodes()
    nodes = np.column_stack([X1.ravel(), X2.ravel()])
    field = field0
    for k in range(nsteps + 1):
        U = G(field)
        speed = float(np.max(np.linalg.norm(U, axis=-1)))
        t = k * dt
        log(t, field, speed)
        if snapshot_every and k % snapshot_every == 0:
            rec.snapshots.append(field)
            rec.snapshot_times.append(t)
            rec.node_velocity.append(U)
        stop = callback is not None and callback(t, field, U) is True
        if k == nsteps or stop:
            rec.stopped_early = stop and k < nsteps
            break
        if speed * dt > h:
            rec.cfl_violations += 1
            warnings.warn(f"CFL violated at t={t:.4g}: max|u| dt = {speed * dt:.3g} > h = {h:.3g}",
                          CFLWarning, stacklevel=2)
        vel = lambda P: _interp_nodes(U, h, L, np.clip(P, 0.0, L))
        dep = np.clip(_rk4(vel, nodes, -dt), 0.0, L)
        new = _remap(field.values, h, dep, remap).reshape(field.shape)
        live = ~particles.exited
        if live.any():
            particles.x[live] = _rk4(vel, particles.x[live], dt)
        _track_exits(particles, box, t + dt, rec, odd)
        field = field.replace(values=new)
    if snapshot_every and rec.snapshot_times[-1] != rec.times[-1]:
        rec.snapshots.append(field)
        rec.snapshot_times.append(rec.times[-1])
        rec.node_velocity.append(U)
    rec.final_field = field
    return rec


# monitors

def barrier_check(field: ScalarField, sc: BlowupScenario, t: float, kp: KernelParams,
                  qc: QuadConfig = QuadConfig(), probes_per_segment: int = 64) -> dict:
    """Velocity sign conditions on the barrier segments at time ``t``.

    Passes when ``u1 + speed(X_t) <= err`` on I_t and ``u2 >= -err`` on J_t.
    """
    if not t < sc.T_eps:
        raise ValueError("the barrier exists only for t < T_eps")
    I, J = sc.probes(t, probes_per_segment)
    X = sc.X(t)
    speed = float(sc.barrier_speed(X))
    uI, eI = velocity_many(field, kp, I, qc)
    margin = uI[:, 0] + speed
    out = {
        "t": float(t), "X_t": float(X), "barrier_speed": speed,
        "I_points": I.tolist(), "I_u1": uI[:, 0].tolist(), "I_err": eI.tolist(),
        "I_margin": margin.tolist(),
        "max_margin_I": float(np.max(margin)),
        "I_pass": bool(np.all(margin <= eI)),
    }
    if len(J):
        uJ, eJ = velocity_many(field, kp, J, qc)
        out.update({
            "J_points": J.tolist(), "J_u2": uJ[:, 1].tolist(), "J_err": eJ.tolist(),
            "min_u2_J": float(np.min(uJ[:, 1])),
            "J_pass": bool(np.all(uJ[:, 1] >= -eJ)),
        })
    else:
        out.update({"J_points": [], "J_u2": [], "J_err": [], "min_u2_J": None, "J_pass": True})
    out["pass"] = out["I_pass"] and out["J_pass"]
    return out


def grid_barrier_margins(U, h, sc: BlowupScenario, t: float, probes: int = 64):
    """Barrier margins from interpolated node velocities (cheap per-step monitor)."""
    L = (U.shape[0] - 1) * h
    I, J = sc.probes(t, probes)
    uI = _interp_nodes(U, h, L, I)
    margin = float(np.max(uI[:, 0] + sc.barrier_speed(sc.X(t))))
    min_u2 = float(np.min(_interp_nodes(U, h, L, J)[:, 1])) if len(J) else float("nan")
    return margin, min_u2


def level_distance(field: ScalarField, trap: Trapezoid, level: float = 0.999) -> float:
    """Distance from the open-quadrant nodes with value below ``level`` to the trapezoid."""
    X1, X2 = field.nodes()
    sel = (X1 > 0) & (X2 > 0) & (field.values < level)
    if not sel.any():
        return float("inf")
    return float(np.min(trap.distance(np.column_stack([X1[sel], X2[sel]]))))


def containment_monitor(record: TrajectoryRecord, sc: BlowupScenario, level: float = 0.999) -> dict:
    """Distance series d(t) between the sub-level nodes and the barrier trapezoid.

    Also reported: ``d_local``, the distance to the part of the trapezoid with
    ``x1 <= eps_prime`` (the part guarded by the barrier segments), and whether
    the box ``(eps_prime, 3/2) x (0, 3/2)`` still lies in the level set.
    """
    if not record.snapshots:
        raise ValueError("the record holds no field snapshots")
    out = {"t": [], "X_t": [], "d": [], "d_local": [], "contained": [], "inner_box_contained": []}
    for t, f in zip(record.snapshot_times, record.snapshots):
        if not (f.values >= level).any():
            raise ValueError(f"empty level set at t={t}")
        trap = sc.trapezoid(t)
        X1, X2 = f.nodes()
        box = (X1 > sc.eps_prime) & (X1 < 1.5) & (X2 > 0) & (X2 < 1.5)
        out["t"].append(float(t))
        out["X_t"].append(float(trap.X))
        out["d"].append(level_distance(f, trap, level))
        out["d_local"].append(level_distance(f, Trapezoid(trap.X, sc.eps_prime), level))
        out["contained"].append(bool(np.all(f.values[trap.contains(X1, X2)] >= level)))
        out["inner_box_contained"].append(bool(np.all(f.values[box] >= level)))
    out["min_d"] = float(min(out["d"]))
    out["min_d_local"] = float(min(out["d_local"]))
    out["positive"] = bool(out["min_d"] > 0)
    return out


# shearing of probe pairs

def _jacobian(field, kp, qc, z, step):
    """Velocity and its Jacobian at ``z`` by centred differences."""
    s1 = step
    s2 = min(step, 0.5 * z[1]) if z[1] > 0 else step
    pts = np.array([z, z + [s1, 0], z - [s1, 0], z + [0, s2], z - [0, s2]])
    U, E = velocity_many(field, kp, pts, qc)
    Jm = np.column_stack([(U[1] - U[2]) / (2 * s1), (U[3] - U[4]) / (2 * s2)])
    return U[0], Jm, float(E.max() / min(s1, s2))


def shear_diagnostic(setup, n: int, kp: KernelParams, qc: QuadConfig, T: float, dt: float,
                     field: ScalarField | None = None, stop_at_crossing: bool = True,
                     steps_per_closing: int = 20, max_steps: int = 2000) -> dict:
    """Tangent-linear evolution of a probe pair under the frozen t = 0 velocity.

    The pair separations are far below floating-point resolution of the base
    positions, so the separation is propagated by the linearised flow and
    stored divided by the cap size ``a_n``.  The difference quotient uses the
    stretched separation (vertical gap divided by the wall weight).  The step
    is the smaller of ``dt`` and the initial gap-closing time over
    ``steps_per_closing``.
    """
    if isinstance(setup, IllposedSpecLow):
        if not 1 <= n <= setup.n_max:
            raise ValueError("n must lie in 1..n_max")
        field = field or build_illposed_low(setup)
        an = setup.a_n(n)
        gap_axis = 0
    elif isinstance(setup, IllposedSpecHigh):
        if not 1 <= n <= setup.n0:
            raise ValueError("n must lie in 1..n0")
        if setup.probe_pair(n)[0][1] < MIN_RESOLVED_HEIGHT:
            raise ResolutionError(
                f"probe pair {n} sits at height {setup.probe_pair(n)[0][1]:.3g}; the vertical "
                "shear there is below double-precision resolution of the velocity")
        field = field or build_illposed_high(setup)
        an = setup.a_n(n)
        gap_axis = 1
    else:
        raise TypeError("setup must be an IllposedSpecLow or IllposedSpecHigh")
    y = setup.probe_pair(n)[0]
    jump = setup.relative_jump(n)
    z = y.astype(float).copy()
    d = setup.relative_separation(n)
    smap = setup.smap

    def quotient(z, d):
        w = kappa_beta(smap.beta, z[1]) if z[1] > 0 else 1.0
        return jump / np.hypot(d[0], d[1] / w)

    q0_exact = jump / np.hypot(*setup.stretched_separation(n))
    step = lambda zz: max(min(qc.fd_step, 0.25 * zz[1]), 1e-12)

    # high case: the plateau corner is a material point sliding along the wall;
    # follow the pair in the frame moving with it (frozen data would leave it behind)
    drift = np.zeros(2)
    if gap_axis == 1:
        drift = velocity_many(field, kp, np.zeros((1, 2)), qc)[0][0] * [1.0, 0.0]

    def rhs(z, d):
        u, J, _ = _jacobian(field, kp, qc, z, step(z))
        return u - drift, J @ d

    # resolve the closing of the gap: at least ~20 steps over its initial timescale
    rate = abs(rhs(z, d)[1][gap_axis])
    if rate > 0:
        dt = min(dt, abs(d[gap_axis]) / rate / steps_per_closing)
    ts, zs, ds, qs = [0.0], [z.copy()], [d.copy()], [quotient(z, d)]
    crossing = None
    nsteps = min(int(np.ceil(T / dt - 1e-9)), max_steps)
    for k in range(nsteps):
        u1, g1 = rhs(z, d)
        u2, g2 = rhs(z + 0.5 * dt * u1, d + 0.5 * dt * g1)
        u3, g3 = rhs(z + 0.5 * dt * u2, d + 0.5 * dt * g2)
        u4, g4 = rhs(z + dt * u3, d + dt * g3)
        zn = z + dt * (u1 + 2 * u2 + 2 * u3 + u4) / 6
        dn = d + dt * (g1 + 2 * g2 + 2 * g3 + g4) / 6
        t = (k + 1) * dt
        if crossing is None and np.sign(dn[gap_axis]) != np.sign(d[gap_axis]):
            s = d[gap_axis] / (d[gap_axis] - dn[gap_axis])
            dc = d + s * (dn - d)
            zc = z + s * (zn - z)
            dc[gap_axis] = 0.0
            crossing = {"t": float(ts[-1] + s * dt), "quotient": float(quotient(zc, dc)),
                        "z": zc.tolist(), "separation": dc.tolist()}
        z, d = zn, dn
        ts.append(t)
        zs.append(z.copy())
        ds.append(d.copy())
        qs.append(quotient(z, d))
        if crossing is not None and stop_at_crossing:
            break
    return {
        "case": "low" if gap_axis == 0 else "high",
        "n": n, "a_n": an, "jump_over_a_n": jump, "dt": float(dt),
        "t": ts, "z": [list(map(float, p)) for p in zs],
        "gap1": [float(p[0]) for p in ds], "gap2": [float(p[1]) for p in ds],
        "quotient": [float(q) for q in qs],
        "quotient_t0_exact": float(q0_exact),
        "crossing": crossing,
        "growth": (crossing["quotient"] / qs[0]) if crossing else float(max(qs) / qs[0]),
    }
