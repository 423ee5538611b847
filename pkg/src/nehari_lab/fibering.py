"""Scalar fibering engine.

Every quantity along a ray ``t -> (t u, t v)`` depends on the pair only
through four numbers::

    a = ||(u, v)||^2          b = theta * int |u|^alpha |v|^beta
    c = ||u||_p^p             d = ||v||_q^q

so the fibering maps, their maximisers and the two Nehari projections are
plain one-dimensional analysis on :class:`FiberingCoefficients`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

from .exceptions import DegenerateInputError, DomainError, NoProjectionError

ROOT_XTOL = 1e-12
ROOT_MAXITER = 200
DOUBLE_ROOT_RTOL = 1e-9


@dataclass(frozen=True)
class Exponents:
    p: float
    q: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (1.0 <= self.p <= self.q < 2.0):
            raise DomainError(
                f"assumption (P) requires 1 <= p <= q < 2, got p={self.p}, q={self.q}")
        if not (self.alpha > 1.0 and self.beta > 1.0):
            raise DomainError(
                f"assumption (P) requires alpha > 1 and beta > 1, got "
                f"alpha={self.alpha}, beta={self.beta}")
        if not self.eta > 2.0:
            raise DomainError(
                f"assumption (P) requires alpha + beta > 2, got {self.eta}")

    @property
    def eta(self) -> float:
        return self.alpha + self.beta


@dataclass(frozen=True)
class FiberingCoefficients:
    """Invariants ``(a, b, c, d)`` of one pair plus its exponents."""

    a: float
    b: float
    c: float
    d: float
    exp: Exponents

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.a, self.b, self.c, self.d)):
            raise DomainError("fibering coefficients must be finite")
        if min(self.a, self.b, self.c, self.d) < 0:
            raise DomainError("fibering coefficients must be nonnegative")
        if self.a <= 0 or self.c + self.d <= 0:
            raise DegenerateInputError("zero pair has no fibering map")

    @property
    def in_cone(self) -> bool:
        """True when the coupling invariant is positive."""
        return self.b > 0

    def scaled(self, k: float) -> "FiberingCoefficients":
        """Coefficients of the pair multiplied by ``k``."""
        e = self.exp
        return replace(self, a=k ** 2 * self.a, b=k ** e.eta * self.b,
                       c=k ** e.p * self.c, d=k ** e.q * self.d)

    def at(self, t: float) -> "FiberingCoefficients":
        return self.scaled(t)


class CriticalPoints(NamedTuple):
    t_plus: float
    t_max: float
    t_minus: float

    @property
    def is_double(self) -> bool:
        return self.t_plus == self.t_max == self.t_minus


class ClosedFormConstants(NamedTuple):
    c_n: float
    c_e: float


class ClosedForm(NamedTuple):
    t_n: float
    lambda_n: float
    t_e: float
    lambda_e: float
    constants: ClosedFormConstants


def _check_t(t):
    if not t > 0:
        raise DomainError(f"scale t must be positive, got {t}")


def _ratio_parts(coeffs, t, energy_form):
    """Numerator ``H`` and denominator ``G`` of Q_n (or Q_e) and their t-derivatives."""
    e = coeffs.exp
    if energy_form:
        A, B, C, D = 0.5 * coeffs.a, coeffs.b / e.eta, coeffs.c / e.p, coeffs.d / e.q
    else:
        A, B, C, D = coeffs.a, coeffs.b, coeffs.c, coeffs.d
    t2, te, tp, tq = t * t, t ** e.eta, t ** e.p, t ** e.q
    H = A * t2 - B * te
    G = C * tp + D * tq
    dH = 2 * A * t - e.eta * B * te / t
    dG = (e.p * C * tp + e.q * D * tq) / t
    return H, G, dH, dG


def q_n(coeffs: FiberingCoefficients, t: float) -> float:
    """R_n along the ray: ``(a t^2 - b t^eta) / (c t^p + d t^q)``."""
    _check_t(t)
    H, G, _, _ = _ratio_parts(coeffs, t, False)
    return H / G


def q_e(coeffs: FiberingCoefficients, t: float) -> float:
    """R_e along the ray: ``(a t^2/2 - b t^eta/eta) / (c t^p/p + d t^q/q)``."""
    _check_t(t)
    H, G, _, _ = _ratio_parts(coeffs, t, True)
    return H / G


def dq_n(coeffs: FiberingCoefficients, t: float) -> float:
    _check_t(t)
    H, G, dH, dG = _ratio_parts(coeffs, t, False)
    return (dH * G - H * dG) / (G * G)


def dq_e(coeffs: FiberingCoefficients, t: float) -> float:
    _check_t(t)
    H, G, dH, dG = _ratio_parts(coeffs, t, True)
    return (dH * G - H * dG) / (G * G)


def safeguarded_root(f: Callable[[float], tuple[float, float]], lo: float, hi: float,
                     xtol: float = ROOT_XTOL, maxiter: int = ROOT_MAXITER) -> float:
    """Root of ``f`` in the sign-changing bracket ``[lo, hi]``.

    ``f`` returns ``(value, derivative)``. Newton steps are taken when they stay
    inside the current bracket, bisection otherwise.
    """
    flo, _ = f(lo)
    fhi, _ = f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise DomainError(f"bracket [{lo}, {hi}] does not change sign")
    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        fx, dfx = f(x)
        if fx == 0:
            return x
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
        else:
            hi = x
        width = hi - lo
        if width <= xtol + 4e-16 * abs(x):
            return 0.5 * (lo + hi)
        x_new = x - fx / dfx if dfx != 0 and math.isfinite(dfx) else math.nan
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        elif abs(x_new - x) <= 0.5 * (xtol + 4e-16 * abs(x)):
            return x_new
        x = x_new
    return x


def _argmax(coeffs, energy_form):
    # Crossing of tH'/H (decreasing from 2) with tG'/G (trapped in [p, q]).
    if not coeffs.in_cone:
        raise DegenerateInputError(
            "pair has zero coupling: the fibering quotient is increasing, no maximiser")
    e = coeffs.exp
    if energy_form:
        A, B, C, D = 0.5 * coeffs.a, coeffs.b / e.eta, coeffs.c / e.p, coeffs.d / e.q
    else:
        A, B, C, D = coeffs.a, coeffs.b, coeffs.c, coeffs.d
    hi = (2 * A / (e.eta * B)) ** (1.0 / (e.eta - 2))

    # Work in s = t / hi so the bracket is scale free.
    def cross(s):
        t = s * hi
        te2 = B * t ** (e.eta - 2)
        H = A - te2
        calH = 2 - (e.eta - 2) * te2 / H
        dcalH = -(e.eta - 2) ** 2 * A * te2 / (H * H) / s
        tp, tq = C * t ** e.p, D * t ** e.q
        G = tp + tq
        calG = (e.p * tp + e.q * tq) / G
        dcalG = (e.p - e.q) ** 2 * tp * tq / (G * G) / s
        return calH - calG, dcalH - dcalG

    lo = 1e-6
    while cross(lo)[0] <= 0:
        lo *= 1e-6
        if lo < 1e-200:
            raise DomainError("could not bracket the fibering maximiser")
    return hi * safeguarded_root(cross, lo, 1.0, xtol=ROOT_XTOL / max(hi, 1.0))


def find_t_n(coeffs: FiberingCoefficients) -> float:
    """Unique maximiser of :func:`q_n` on ``(0, inf)``."""
    return _argmax(coeffs, False)


def find_t_e(coeffs: FiberingCoefficients) -> float:
    """Unique maximiser of :func:`q_e` on ``(0, inf)``."""
    return _argmax(coeffs, True)


def lambda_n_value(coeffs: FiberingCoefficients) -> float:
    return q_n(coeffs, find_t_n(coeffs))


def lambda_e_value(coeffs: FiberingCoefficients) -> float:
    return q_e(coeffs, find_t_e(coeffs))


def solve_projections(coeffs: FiberingCoefficients, lam: float,
                      xtol: float = ROOT_XTOL) -> CriticalPoints:
    """The two roots ``t_plus < t_max < t_minus`` of ``q_n(t) = lam``.

    At ``lam == Lambda_n`` (within ``DOUBLE_ROOT_RTOL``) the double root is
    returned in all three slots. Raises :class:`NoProjectionError` above it.
    """
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    t_max = find_t_n(coeffs)
    lam_n = q_n(coeffs, t_max)
    if abs(lam - lam_n) <= DOUBLE_ROOT_RTOL * lam_n:
        return CriticalPoints(t_max, t_max, t_max)
    if lam > lam_n:
        raise NoProjectionError(
            f"lambda={lam} exceeds Lambda_n={lam_n}: the ray misses the Nehari set",
            lambda_n=lam_n)

    # Work in s = t / t_max so ``xtol`` is relative to the scale of the ray.
    def g(s):
        H, G, dH, dG = _ratio_parts(coeffs, s * t_max, False)
        return H / G - lam, t_max * (dH * G - H * dG) / (G * G)

    e = coeffs.exp
    s_zero = (coeffs.a / coeffs.b) ** (1.0 / (e.eta - 2)) / t_max
    s_plus = _small_root(g, xtol)
    s_minus = safeguarded_root(g, 1.0, s_zero, xtol)
    return CriticalPoints(s_plus * t_max, t_max, s_minus * t_max)


def _small_root(g, xtol):
    # q_n ~ t^(2-p) near 0; walk down until the quotient drops below lambda.
    lo = 1.0
    while g(lo)[0] > 0:
        lo *= 1e-3
        if lo < 1e-300:
            raise DomainError("could not bracket the lower projection")
    return safeguarded_root(g, lo, 1.0, xtol * lo)


def qn_qe_identity_residual(coeffs: FiberingCoefficients, t: float) -> float:
    """Relative mismatch in ``Q_n - Q_e = (t/pq) * (q c t^p + p d t^q)/(c t^p + d t^q) * Q_e'``.

    Normalised by ``1 + |Q_n| + |Q_e|`` so cancellation near ``t_e`` is measured
    against the size of the terms being subtracted.
    """
    _check_t(t)
    e = coeffs.exp
    lhs = q_n(coeffs, t) - q_e(coeffs, t)
    tp, tq = coeffs.c * t ** e.p, coeffs.d * t ** e.q
    rhs = t / (e.p * e.q) * (e.q * tp + e.p * tq) / (tp + tq) * dq_e(coeffs, t)
    scale = 1 + abs(q_n(coeffs, t)) + abs(q_e(coeffs, t))
    return abs(lhs - rhs) / scale


def closed_form_pq(coeffs: FiberingCoefficients, theta: float = 1.0) -> ClosedForm:
    """Explicit maximisers and maxima when ``p == q``.

    ``coeffs.b`` already carries ``theta``; the standalone constants still take
    ``theta`` so the explicit ``C * a^.. * (b/theta)^.. / (c + d)`` forms hold.
    """
    e = coeffs.exp
    if e.p != e.q:
        raise DomainError("closed forms need p == q")
    if not coeffs.in_cone:
        raise DegenerateInputError("pair has zero coupling")
    q, eta, a, b = e.q, e.eta, coeffs.a, coeffs.b
    r = 1.0 / (eta - 2)
    t_n = ((2 - q) * a / ((eta - q) * b)) ** r
    t_e = ((2 - q) * eta * a / (2 * (eta - q) * b)) ** r
    consts = closed_form_constants(q, eta, theta)
    integral = b / theta
    shape = a ** ((eta - q) * r) * integral ** ((q - 2) * r) / (coeffs.c + coeffs.d)
    return ClosedForm(t_n, consts.c_n * shape, t_e, consts.c_e * shape, consts)


def closed_form_constants(q: float, eta: float, theta: float = 1.0) -> ClosedFormConstants:
    r = 1.0 / (eta - 2)
    c_n = (theta ** ((q - 2) * r) * (eta - 2) * (eta - q) ** (-(eta - q) * r)
           * (2 - q) ** ((2 - q) * r))
    c_e = (q * (eta - 2) * ((2 - q) * eta / theta) ** ((2 - q) * r)
           * (1 / (2 * (eta - q))) ** ((eta - q) * r))
    return ClosedFormConstants(c_n, c_e)


def constant_ratio(q: float, eta: float) -> float:
    """``2^((eta-q)/(eta-2)) * eta^((q-2)/(eta-2)) / q``, which equals ``C_n / C_e``."""
    if not (1 < q < 2 and eta > 2):
        raise DomainError(f"need q in (1, 2) and eta > 2, got q={q}, eta={eta}")
    r = 1.0 / (eta - 2)
    return 2 ** ((eta - q) * r) * eta ** ((q - 2) * r) / q


def constant_inequality_check(q: float, eta: float) -> bool:
    return constant_ratio(q, eta) > 1


def mediant_bounds(a1: float, b1: float, a2: float, b2: float) -> tuple[float, float, float]:
    """``(min, max, mediant)`` of ``a1/b1``, ``a2/b2`` and ``(a1+a2)/(b1+b2)``."""
    if not (b1 > 0 and b2 > 0):
        raise DomainError("mediant needs positive denominators")
    r1, r2 = a1 / b1, a2 / b2
    return min(r1, r2), max(r1, r2), (a1 + a2) / (b1 + b2)


def stationarity_coupling_residual(coeffs: FiberingCoefficients, which: str = "n") -> float:
    """Relative mismatch of the coupling value forced by stationarity at ``t = 1``.

    ``which="n"`` checks ``d/dt Q_n = 0`` at ``t = 1``, ``which="e"`` the same for Q_e.
    """
    e = coeffs.exp
    a, b, c, d = coeffs.a, coeffs.b, coeffs.c, coeffs.d
    p, q, eta = e.p, e.q, e.eta
    if which == "n":
        rhs = a * ((2 - p) * c + (2 - q) * d) / ((eta - p) * c + (eta - q) * d)
    elif which == "e":
        rhs = (a * ((1 / p - 0.5) * c + (1 / q - 0.5) * d)
               / ((1 / p - 1 / eta) * c + (1 / q - 1 / eta) * d))
    else:
        raise ValueError(f"which must be 'n' or 'e', got {which!r}")
    return abs(b - rhs) / max(abs(b), abs(rhs), 1e-300)


def coupling_sandwich(exp: Exponents) -> tuple[float, float]:
    """Bounds ``f(q) <= b/a <= f(p)`` at the Q_n-stationary scale, ``f(x) = (2-x)/(eta-x)``."""
    f = lambda x: (2 - x) / (exp.eta - x)
    return f(exp.q), f(exp.p)
