"""Energy functional, its radial derivatives and gradient, Nehari classification."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import fibering as fb
from .exceptions import DegenerateInputError, DomainError
from .fields import (FieldPair, GridSpec, PotentialSpec, coefficients_of,
                     coupling_integral, fractional_laplacian_apply, inner,
                     lp_norm_pow, x_norm_sq)

CLASSIFY_TOL = 1e-8


@dataclass(frozen=True)
class ProblemParams:
    exp: fb.Exponents
    theta: float = 1.0
    lam: float = 0.1
    grid: GridSpec = GridSpec()
    pots: tuple[PotentialSpec, PotentialSpec] = (PotentialSpec(), PotentialSpec())

    def __post_init__(self):
        if not self.theta > 0:
            raise DomainError(f"assumption (P) requires theta > 0, got {self.theta}")
        if not self.lam > 0:
            raise DomainError(f"assumption (P) requires lambda > 0, got {self.lam}")
        crit = self.grid.critical_exponent
        if not self.exp.eta < crit:
            raise DomainError(
                f"assumption (P) requires alpha + beta < 2N/(N-2s) = {crit:.6g}, "
                f"got {self.exp.eta}")
        for P in self.pots:
            P.check(self.grid)

    @property
    def s(self) -> float:
        return self.grid.s

    def potential_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.pots[0].on(self.grid), self.pots[1].on(self.grid)

    def with_lambda(self, lam: float) -> "ProblemParams":
        return replace(self, lam=lam)


class Branch(str, Enum):
    PLUS = "NPlus"
    MINUS = "NMinus"


class NehariClass(NamedTuple):
    tag: str
    d1: float
    d2: float


def energy(params: ProblemParams, pair: FieldPair) -> float:
    if pair.is_zero():
        return 0.0
    return energy_from_coefficients(params, coefficients_of(pair, params))


def energy_from_coefficients(params: ProblemParams, co: fb.FiberingCoefficients) -> float:
    e, lam = co.exp, params.lam
    return 0.5 * co.a - lam * (co.c / e.p + co.d / e.q) - co.b / e.eta


def energy_direct(params: ProblemParams, pair: FieldPair) -> float:
    """Same value as :func:`energy`, assembled term by term from the fields."""
    e, g, lam = params.exp, pair.grid, params.lam
    V1, V2 = params.potential_arrays()
    quad = 0.5 * (inner(pair.u, fractional_laplacian_apply(pair.u, g) + V1 * pair.u, g)
                  + inner(pair.v, fractional_laplacian_apply(pair.v, g) + V2 * pair.v, g))
    return (quad - lam / e.p * lp_norm_pow(pair.u, e.p, g)
            - lam / e.q * lp_norm_pow(pair.v, e.q, g)
            - params.theta / e.eta * coupling_integral(pair, e.alpha, e.beta))


def radial_derivatives(params: ProblemParams, co: fb.FiberingCoefficients) -> tuple[float, float]:
    """First and second derivative of ``t -> E(t u, t v)`` at ``t = 1``."""
    return _radial_any_lambda(co, params.lam)


def d_energy_radial(params: ProblemParams, pair: FieldPair) -> float:
    return radial_derivatives(params, coefficients_of(pair, params))[0]


def d2_energy_radial(params: ProblemParams, pair: FieldPair) -> float:
    return radial_derivatives(params, coefficients_of(pair, params))[1]


def _odd_power(f, r):
    # |f|^(r-2) f, with the p = 1 subgradient pinned to 0 at f = 0
    return np.sign(f) * np.abs(f) ** (r - 1)


def gradient(params: ProblemParams, pair: FieldPair) -> FieldPair:
    """L2 representative of ``E'(u, v)``."""
    e, g, lam, th = params.exp, pair.grid, params.lam, params.theta
    V1, V2 = params.potential_arrays()
    u, v = pair.u, pair.v
    au, av = np.abs(u), np.abs(v)
    gu = (fractional_laplacian_apply(u, g) + V1 * u - lam * _odd_power(u, e.p)
          - th * e.alpha / e.eta * _odd_power(u, e.alpha) * av ** e.beta)
    gv = (fractional_laplacian_apply(v, g) + V2 * v - lam * _odd_power(v, e.q)
          - th * e.beta / e.eta * au ** e.alpha * _odd_power(v, e.beta))
    return FieldPair(gu, gv, g)


def pair_inner(f: FieldPair, h: FieldPair) -> float:
    return inner(f.u, h.u, f.grid) + inner(f.v, h.v, f.grid)


def sup_norm(f: FieldPair) -> float:
    return float(max(np.max(np.abs(f.u)), np.max(np.abs(f.v))))


def classify(params: ProblemParams, pair: FieldPair, tol: float = CLASSIFY_TOL) -> NehariClass:
    if pair.is_zero():
        raise DegenerateInputError("cannot classify the zero pair")
    co = coefficients_of(pair, params)
    return classify_coefficients(params, co, tol)


def classify_coefficients(params, co, tol=CLASSIFY_TOL) -> NehariClass:
    d1, d2 = radial_derivatives(params, co)
    band = tol * (1 + co.a)
    if abs(d1) > band:
        tag = "OffManifold"
    elif abs(d2) <= band:
        tag = "NZero"
    else:
        tag = Branch.PLUS.value if d2 > 0 else Branch.MINUS.value
    return NehariClass(tag, d1, d2)


def rayleigh_n(params: ProblemParams, pair: FieldPair) -> float:
    co = _quotient_coefficients(params, pair)
    return (co[0] - co[1]) / (co[2] + co[3])


def rayleigh_e(params: ProblemParams, pair: FieldPair) -> float:
    e = params.exp
    a, b, c, d = _quotient_coefficients(params, pair)
    return (0.5 * a - b / e.eta) / (c / e.p + d / e.q)


def _quotient_coefficients(params, pair):
    e, g = params.exp, pair.grid
    c = lp_norm_pow(pair.u, e.p, g)
    d = lp_norm_pow(pair.v, e.q, g)
    if c + d <= 0:
        raise DomainError("Rayleigh quotients need a nonzero pair")
    a = x_norm_sq(pair, params.potential_arrays())
    b = params.theta * coupling_integral(pair, e.alpha, e.beta)
    return a, b, c, d


def coercive_form(params: ProblemParams, co: fb.FiberingCoefficients) -> float:
    """Energy with the coupling eliminated through ``E'(u,v)(u,v) = 0``."""
    e, lam = co.exp, params.lam
    return ((0.5 - 1 / e.eta) * co.a + lam * (1 / e.eta - 1 / e.p) * co.c
            + lam * (1 / e.eta - 1 / e.q) * co.d)


class IdentityResiduals(NamedTuple):
    res_n: float
    res_e: float


def derivative_identity_residuals(params: ProblemParams, pair: FieldPair,
                                  t: float) -> IdentityResiduals:
    """Relative residuals of ``t G dR_n/dt = E''`` and ``t G_e dR_e/dt = E'`` along the ray.

    ``G = ||u||_p^p + ||v||_q^q`` and ``G_e = ||u||_p^p/p + ||v||_q^q/q`` of the
    scaled pair. For each identity lambda is set to the quotient value at
    ``t``, so any ``t > 0`` is admissible.
    """
    if not t > 0:
        raise DomainError(f"scale t must be positive, got {t}")
    co = coefficients_of(pair, params)
    scaled = co.at(t)
    G = scaled.c + scaled.d
    G_e = scaled.c / co.exp.p + scaled.d / co.exp.q

    lam_n = fb.q_n(co, t)
    _, d2 = _radial_any_lambda(scaled, lam_n)
    lhs_n = fb.dq_n(co, t)
    rhs_n = d2 / (t * G)
    lam_e = fb.q_e(co, t)
    d1, _ = _radial_any_lambda(scaled, lam_e)
    lhs_e = fb.dq_e(co, t)
    rhs_e = d1 / (t * G_e)
    return IdentityResiduals(_rel(lhs_n, rhs_n, scaled, t, lam_n),
                             _rel(lhs_e, rhs_e, scaled, t, lam_e))


def _radial_any_lambda(co, lam):
    e = co.exp
    d1 = co.a - lam * co.c - lam * co.d - co.b
    d2 = co.a - lam * (e.p - 1) * co.c - lam * (e.q - 1) * co.d - (e.eta - 1) * co.b
    return d1, d2


def _rel(lhs, rhs, co, t, lam):
    # Scale by the size of the terms combined in E' / E'' divided by t G.
    scale = (co.a + co.b + abs(lam) * (co.c + co.d)) / (t * (co.c + co.d))
    return abs(lhs - rhs) / scale
