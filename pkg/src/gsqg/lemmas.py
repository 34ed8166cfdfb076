"""Closed forms of the quadrant-estimate integrals and the critical-alpha margins.

The basic special function is ``f(s) = int_0^s (q^2 + 1)^(-alpha) dq``; its
linear-growth defect ``mu`` is the limit of ``s^(1-2a)/(1-2a) - f(s)``.
Region integrals are cross-checked against :mod:`gsqg.regions`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from . import regions

F_TOL = 1e-10
CROSS_TOL = 1e-4
S_MAX = 1e4
MU_ALPHA_MAX = 0.49


@dataclass
class LemmaReport:
    name: str
    alpha: float
    aux_param: float | None
    closed_form: float
    quadrature: float
    bound: float
    passed: bool
    discrepancy: float
    anchor: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


@dataclass(frozen=True)
class SpecialValues:
    alpha: float
    f_of: dict
    mu: float
    mu_upper: float


# special functions

@lru_cache(maxsize=4096)
def f_alpha(alpha: float, s: float) -> float:
    """``int_0^s (q^2+1)^(-alpha) dq`` by adaptive quadrature, odd in ``s``."""
    if s < 0:
        return -f_alpha(alpha, -s)
    if alpha == 0:
        return float(s)
    g = lambda q: (q * q + 1.0) ** -alpha
    if s <= 1.0:
        return quad(g, 0.0, s, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return f_alpha(alpha, 1.0) + quad(g, 1.0, s, epsabs=1e-13, epsrel=1e-12, limit=500)[0]


def _defect(alpha: float, q: float) -> float:
    """``q^(-2a) - (q^2+1)^(-a)`` without cancellation for large ``q``."""
    return q ** (-2 * alpha) * -np.expm1(-alpha * np.log1p(q**-2.0))


@lru_cache(maxsize=256)
def mu_alpha(alpha: float, s_max: float = S_MAX) -> float:
    """Limit of ``s^(1-2a)/(1-2a) - f(s)``.

    The value at ``s_max`` is assembled as ``1/(1-2a) - f(1)`` plus the
    integral of the defect ``q^(-2a) - (q^2+1)^(-a)`` over ``[1, s_max]``,
    which equals the direct difference but does not cancel; the tail of the
    defect beyond ``s_max`` is added by quadrature.
    """
    if not 0.0 < alpha <= MU_ALPHA_MAX:
        raise ValueError(f"mu is evaluated for alpha in (0, {MU_ALPHA_MAX}], got {alpha}")
    a = alpha
    d = lambda q: _defect(a, q)
    at_s = 1.0 / (1 - 2 * a) - f_alpha(a, 1.0)
    at_s += quad(d, 1.0, s_max, epsabs=1e-15, epsrel=1e-12, limit=500)[0]
    tail = quad(d, s_max, np.inf, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
    return at_s + tail


def mu_upper(alpha: float) -> float:
    return 1.0 / (1 - 2 * alpha) - f_alpha(alpha, 1.0) + alpha / (1 + 2 * alpha)


def special_values(alpha: float, s_values=(0.5, 1.0, 2.0)) -> SpecialValues:
    return SpecialValues(alpha, {s: f_alpha(alpha, s) for s in s_values},
                         mu_alpha(alpha), mu_upper(alpha))


# elementary closed forms

def weighted_line_integral(alpha: float, other: float, a: float, c: float) -> float:
    """``2 alpha int_a^c t / (other^2 + t^2)^(1+alpha) dt`` for ``0 <= a <= c``."""
    return (other * other + a * a) ** -alpha - (other * other + c * c) ** -alpha


def power_line_integral(alpha: float, r: float, s: float, a: float) -> float:
    """``int_r^s (t^2 + a^2)^(-alpha) dt`` for ``0 <= r <= s`` through ``f``."""
    if a > 0:
        return a ** (1 - 2 * alpha) * (f_alpha(alpha, s / a) - f_alpha(alpha, r / a))
    return (s ** (1 - 2 * alpha) - r ** (1 - 2 * alpha)) / (1 - 2 * alpha)


def bad_box_closed(alpha: float, b: float) -> float:
    """``2 alpha`` times the weighted integral over the box ``(-1, 1) x (0, b)``."""
    return 2 / (1 - 2 * alpha) - 2 * b ** (1 - 2 * alpha) * f_alpha(alpha, 1.0 / b)


def good_strip_closed(alpha: float) -> float:
    """``2 alpha`` times the weighted integral over the slanted strip ``x2 < x1 < x2 + 2``."""
    return (2 ** (1 - 2 * alpha) / (1 - 2 * alpha)
            - 2**-alpha * (f_alpha(alpha, 1.0) + mu_alpha(alpha)))


def identity_checks(draws: int = 100, seed: int = 0, alpha_range=(0.01, 0.25),
                    region_draws: int = 6) -> dict:
    """Largest mismatch of the closed forms against direct quadrature on random parameters.

    The two line integrals are checked on ``draws`` random tuples (both the
    horizontal and the vertical reading use the same formulas), including a
    share with ``a = 0``.  The region forms are checked on ``region_draws``
    random ``(alpha, b)`` pairs by 2D quadrature.
    """
    rng = np.random.default_rng(seed)
    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
    e_line = e_pow = 0.0
    for k in range(draws):
        al = rng.uniform(*alpha_range)
        other = rng.uniform(0.0, 3.0)
        a, c = np.sort(rng.uniform(0.0, 5.0, 2))
        lhs = weighted_line_integral(al, other, a, c)
        rhs = 2 * al * quad(lambda t: t / (other * other + t * t) ** (1 + al), a, c, **opts)[0]
        e_line = max(e_line, abs(lhs - rhs))
        r, s_ = np.sort(rng.uniform(0.0, 5.0, 2))
        aa = 0.0 if k % 5 == 0 else rng.uniform(0.0, 3.0)
        lhs = power_line_integral(al, r, s_, aa)
        pts = [0.0] if r == 0 else None
        rhs = quad(lambda t: (t * t + aa * aa) ** -al, r, s_, points=pts, **opts)[0]
        e_pow = max(e_pow, abs(lhs - rhs))
    e_box = e_strip = 0.0
    for _ in range(region_draws):
        al = rng.uniform(*alpha_range)
        b = rng.uniform(0.05, 1.0)
        box = 2 * al * regions.region_integral(al, 2, regions.strips_B_plus(b))
        e_box = max(e_box, abs(box - bad_box_closed(al, b)))
        strip = 2 * al * regions.region_integral(al, 2, regions.strips_G(b))
        e_strip = max(e_strip, abs(strip - good_strip_closed(al)))
    return {"draws": draws, "region_draws": region_draws, "seed": seed,
            "line_integral_max_err": float(e_line), "power_integral_max_err": float(e_pow),
            "bad_box_max_err": float(e_box), "good_strip_max_err": float(e_strip)}


# horizontal estimate

def I_of_b(alpha: float, b: float) -> float:
    """Trimmed-region bracket as a function of the depth ``b`` in (0, 1]."""
    if not 0.0 < b <= 1.0:
        raise ValueError("b must lie in (0, 1]")
    a = alpha
    f1, mu = f_alpha(a, 1.0), mu_alpha(a)
    q = 2.0 ** (-1 - a)
    return ((2 ** (1 - 2 * a) - 2) / (1 - 2 * a) - 2**-a * (f1 + mu)
            + 2 * b ** (1 - 2 * a) * (f_alpha(a, 1.0 / b) + f1 - q / (1 - 2 * a) + q * mu))


def I_at_one(alpha: float) -> float:
    a = alpha
    return (4 - 2**-a) * f_alpha(a, 1.0) - (2 + 2**-a - 2 ** (1 - 2 * a)) / (1 - 2 * a)


def g_of_c(alpha: float, c: float) -> float:
    if c < 1.0:
        raise ValueError("c must be >= 1")
    a = alpha
    q = 2.0 ** (-1 - a)
    return (c / ((1 - 2 * a) * (c * c + 1) ** a) - f_alpha(a, c) - f_alpha(a, 1.0)
            + q / (1 - 2 * a) - q * mu_alpha(a))


def g_at_one(alpha: float) -> float:
    a = alpha
    q = 2.0 ** (-1 - a)
    return 3 * q / (1 - 2 * a) - 2 * f_alpha(a, 1.0) - q * mu_alpha(a)


def lemma42_infimum(alpha: float, b_grid=None, check_b=(0.25, 0.5, 1.0),
                    tol: float = CROSS_TOL) -> LemmaReport:
    """Lower bound ``min(I(1), I(1) + 2 g(1))`` against ``1/20``, with quadrature checks.

    ``closed_form`` is the certified lower bound on the ``2 alpha``-scaled
    infimum.  ``quadrature`` is the smallest sampled value of the untrimmed
    bracket over ``b_grid``.  ``discrepancy`` is the largest mismatch between
    the closed form ``I(b)`` and direct quadrature of the trimmed bracket at
    ``check_b``.  The verdict requires the bound, a discrepancy within
    ``tol``, and the sampled infimum not falling below the certified bound.
    """
    if not 0.0 < alpha <= 0.25:
        raise ValueError("alpha must lie in (0, 1/4]")
    if b_grid is None:
        b_grid = np.round(np.linspace(0.0, 1.0, 21), 10)
    i1, g1 = I_at_one(alpha), g_at_one(alpha)
    lower = min(i1, i1 + 2 * g1)
    checks = {}
    for b in check_b:
        cf = I_of_b(alpha, b)
        qv = regions.horizontal_bracket(alpha, b, substituted=True)
        checks[f"{b:g}"] = {"closed_form": cf, "quadrature": qv}
    disc = max(abs(v["closed_form"] - v["quadrature"]) for v in checks.values())
    sampled = {f"{b:g}": regions.horizontal_bracket(alpha, float(b), substituted=False)
               for b in b_grid}
    qmin = min(sampled.values())
    bound = 1.0 / 20
    ok = lower >= bound and disc <= tol and qmin >= lower - tol
    return LemmaReport(
        name="lemma42", alpha=alpha, aux_param=None, closed_form=lower, quadrature=qmin,
        bound=bound, passed=bool(ok), discrepancy=disc,
        anchor="horizontal-velocity estimate: region infimum >= 1/(40 alpha)",
        details={"I1": i1, "g1": g1, "I1_plus_2g1": i1 + 2 * g1,
                 "infimum_bound_unscaled": lower / (2 * alpha),
                 "cross_checks": checks, "untrimmed_bracket": sampled},
    )


# vertical estimate

def lemma43_closed(alpha: float) -> float:
    a = alpha
    return ((2 - 2 ** (1 - 2 * a)) * f_alpha(a, 1.0) + 2 ** (2 - 2 * a) * f_alpha(a, 0.5)
            - 2 ** (1 - 2 * a) * (1 - 2**-a) / (1 - 2 * a))


def lemma43_value(alpha: float, tol: float = CROSS_TOL) -> LemmaReport:
    if not 0.0 < alpha <= 0.25:
        raise ValueError("alpha must lie in (0, 1/4]")
    cf = lemma43_closed(alpha)
    qv = regions.vertical_bracket(alpha)
    disc = abs(cf - qv)
    return LemmaReport(
        name="lemma43", alpha=alpha, aux_param=None, closed_form=cf, quadrature=qv,
        bound=0.0, passed=bool(cf > 0 and disc <= tol), discrepancy=disc,
        anchor="vertical-velocity estimate: good minus bad regions > 0",
    )


# four-term inequality

def four_term(alpha: float, x1, x2, b1, b2):
    p = 1.0 + alpha
    r = lambda a, c: (a * a + c * c) ** p
    return (x2 / r(x1, x2) - x2 / r(2 * b1 - x1, x2)
            - (2 * b2 - x2) / r(x1, 2 * b2 - x2) + (2 * b2 - x2) / r(2 * b1 - x1, 2 * b2 - x2))


def _reduced_side(alpha, s, y2):
    p = 1.0 + alpha
    return y2 / (s * s + y2 * y2) ** p - (2 - y2) / (s * s + (2 - y2) ** 2) ** p


def lemma41_check(alpha: float, samples: int, seed: int = 0) -> dict:
    """Count non-positive values of the four-term expression on random admissible tuples.

    Box sizes are log-uniform on [1e-2, 1e2]; ``x2`` is uniform below the
    smaller box size and ``x1`` uniform in (0, x2].  The reduced one-box form
    (scale by ``b2``, aspect ratio ``c = b1/b2``) is checked on the same
    tuples, and a deterministic family with ``x1 = x2`` and ``b1 = b2`` is added.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    b1 = 10.0 ** rng.uniform(-2, 2, samples)
    b2 = 10.0 ** rng.uniform(-2, 2, samples)
    x2 = rng.uniform(0, 1, samples) * np.minimum(b1, b2)
    x1 = (1.0 - rng.uniform(0, 1, samples)) * x2
    ok = (x1 > 0) & (x2 < np.minimum(b1, b2))
    x1, x2, b1, b2 = x1[ok], x2[ok], b1[ok], b2[ok]
    full = four_term(alpha, x1, x2, b1, b2)
    c, y1, y2 = b1 / b2, x1 / b2, x2 / b2
    reduced = _reduced_side(alpha, y1, y2) - _reduced_side(alpha, 2 * c - y1, y2)
    s = np.linspace(0.01, 0.99, 99)
    diag = four_term(alpha, s, s, np.ones_like(s), np.ones_like(s))
    return {
        "alpha": alpha,
        "samples": int(x1.size),
        "violations": int(np.sum(full <= 0)),
        "reduced_violations": int(np.sum(reduced <= 0)),
        "diagonal_violations": int(np.sum(diag <= 0)),
        "min_value": float(full.min()),
    }


# thresholds

def critical_alpha_margin(alpha: float) -> float:
    a = alpha
    return f_alpha(a, 1.0) - (2 + 2**-a - 2 ** (1 - 2 * a)) / ((1 - 2 * a) * (4 - 2**-a))


def kryz_margin(alpha: float) -> float:
    """Grouped reading ``20^-a/6 - (1/(1-2a) - 2^-a)``."""
    return 20.0**-alpha / 6 - (1.0 / (1 - 2 * alpha) - 2.0**-alpha)


def kryz_margin_printed(alpha: float) -> float:
    """Literal reading ``20^-a/6 - 1/(1-2a) - 2^-a``; negative on all of (0, 1/2)."""
    return 20.0**-alpha / 6 - 1.0 / (1 - 2 * alpha) - 2.0**-alpha


def bisect(fn, lo: float, hi: float, iterations: int = 60, widen: float = 0.05,
           limits=(1e-9, 0.5 - 1e-9), max_widen: int = 20):
    """Bisection for a sign change of ``fn``, widening the bracket if needed.

    Returns ``(root, (lo, hi), residual)`` or ``None`` if no sign change is found.
    """
    flo, fhi = fn(lo), fn(hi)
    for _ in range(max_widen):
        if np.sign(flo) != np.sign(fhi):
            break
        lo, hi = max(limits[0], lo - widen), min(limits[1], hi + widen)
        flo, fhi = fn(lo), fn(hi)
    else:
        return None
    if np.sign(flo) == np.sign(fhi):
        return None
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0:
            lo = hi = mid
            break
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    root = 0.5 * (lo + hi)
    return root, (lo, hi), fn(root)


def critical_alpha(bracket=(0.25, 0.28)):
    return bisect(critical_alpha_margin, *bracket)


def kryz_root(bracket=(0.01, 0.2)):
    """Smallest positive root of the grouped reading, scanning from the left."""
    grid = np.linspace(1e-4, 0.45, 4501)
    vals = np.array([kryz_margin(a) for a in grid])
    idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if idx.size == 0:
        return None
    k = idx[0]
    return bisect(kryz_margin, grid[k], grid[k + 1])


def thresholds_report() -> dict:
    crit = critical_alpha()
    kr = kryz_root()
    printed = np.array([kryz_margin_printed(a) for a in np.linspace(1e-4, 0.49, 491)])
    return {
        "critical_alpha": {
            "root": crit[0], "bracket": list(crit[1]), "residual": crit[2],
            "margin_at_quarter": critical_alpha_margin(0.25),
            "anchor": "critical exponent: margin changes sign near alpha = 0.257",
        },
        "kryz_root": {
            "root": kr[0], "bracket": list(kr[1]), "residual": kr[2],
            "reading": "20^-a/6 - [1/(1-2a) - 2^-a]",
            "anchor": "earlier half-plane criterion: breaks down near alpha = 0.05",
        },
        "kryz_printed_reading": {
            "reading": "20^-a/6 - 1/(1-2a) - 2^-a",
            "root": None,
            "max_on_grid": float(printed.max()),
            "ambiguity_flag": True,
            "note": ("the literal reading is negative for every alpha in (0, 1/2); "
                     "only the grouped reading has a root near 0.05"),
        },
    }
