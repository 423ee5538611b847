"""Estimates of the extremal parameters lambda^* = inf Lambda_n and lambda_* = inf Lambda_e.

Each start draws a point of a smooth parametrised family, runs a compass
pattern search on the family parameters, then refines the resulting pair with
an X-preconditioned gradient descent on the full grid field. The per-start
value is the Lambda of the refined pair; the estimate is the minimum over
starts, so it is an upper bound for the discrete infimum and can only go down
when more starts are added.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import fibering as fb
from .energy import ProblemParams, _odd_power, pair_inner
from .exceptions import DomainError, SamplerError
from .fields import (FieldPair, RieszMap, coefficients_of, estimate_embedding_constant,
                     fractional_laplacian_apply, gaussian, in_cone, inner)

log = logging.getLogger(__name__)

FAMILIES = ("gaussian_bumps", "fourier_modes", "perturbed_pair", "fixed")
MAX_RETRIES = 20


@dataclass
class DirectionSampler:
    """Deterministic source of starting pairs in the coupling cone.

    Start ``i`` uses the RNG stream ``default_rng([seed, i])``, so the first
    ``k`` starts of a larger sampler are exactly the starts of a smaller one.
    ``prescale`` multiplies every emitted pair and leaves all estimates
    unchanged (0-homogeneity).
    """

    seed: int = 0
    family: str = "gaussian_bumps"
    count: int = 32
    prescale: float = 1.0
    n_modes: int = 3
    pair: FieldPair | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown sampler family {self.family!r}; expected one of {FAMILIES}")
        if self.count < 1:
            raise DomainError(f"sampler count must be >= 1, got {self.count}")
        if not self.prescale > 0:
            raise DomainError(f"prescale must be positive, got {self.prescale}")
        if self.family == "fixed" and self.pair is None:
            raise DomainError("family 'fixed' needs a pair")

    @classmethod
    def fixed(cls, pair: FieldPair) -> "DirectionSampler":
        return cls(family="fixed", count=1, pair=pair)

    @property
    def searchable(self) -> bool:
        return self.family != "fixed"

    def rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, index])

    def dimension(self, grid) -> int:
        if self.family == "gaussian_bumps":
            return 2 * grid.dim + 3
        if self.family == "fourier_modes":
            return 2 * self.n_modes * grid.dim + 1
        if self.family == "perturbed_pair":
            return 2 * self.n_modes + 1
        return 0

    def initial_parameters(self, grid, index: int, attempt: int = 0) -> np.ndarray:
        rng = np.random.default_rng([self.seed, index, attempt])
        n = grid.dim
        if self.family == "gaussian_bumps":
            centers = rng.uniform(-2.0, 2.0, 2 * n)
            logw = np.log(rng.uniform(0.7, 3.0, 2))
            return np.concatenate([centers, logw, [rng.uniform(-1.0, 1.0)]])
        if self.family == "fourier_modes":
            return np.concatenate([0.3 * rng.standard_normal(2 * self.n_modes * n),
                                   [rng.uniform(-1.0, 1.0)]])
        if self.family == "perturbed_pair":
            return np.concatenate([0.3 * rng.standard_normal(2 * self.n_modes),
                                   [rng.uniform(-1.0, 1.0)]])
        return np.zeros(0)

    def build(self, grid, theta: np.ndarray, index: int = 0) -> FieldPair:
        """Pair of the family at parameters ``theta`` (before ``prescale``)."""
        n = grid.dim
        if self.family == "fixed":
            return self.pair
        if self.family == "gaussian_bumps":
            cu, cv = theta[:n], theta[n:2 * n]
            wu, wv = np.exp(theta[2 * n:2 * n + 2])
            r = math.exp(theta[2 * n + 2])
            return FieldPair(gaussian(grid, cu, wu), gaussian(grid, cv, wv, amplitude=r), grid)
        if self.family == "fourier_modes":
            m = self.n_modes
            envelope = -0.5 * grid.radius_sq() / 4.0
            fields = []
            for j, coef in enumerate((theta[:m * n], theta[m * n:2 * m * n])):
                log_f = envelope.copy()
                for axis, x in enumerate(grid.coords()):
                    for k in range(m):
                        log_f = log_f + coef[axis * m + k] * np.cos((k + 1) * math.pi * x / grid.half_width)
                fields.append(np.exp(log_f))
            return FieldPair(fields[0], math.exp(theta[-1]) * fields[1], grid)
        # perturbed_pair: overlapping bumps plus smooth random perturbations
        basis = self._perturbations(grid, index)
        m = self.n_modes
        base_u = gaussian(grid, -0.5 * _unit(n), 1.5)
        base_v = gaussian(grid, 0.5 * _unit(n), 1.5)
        u = np.abs(base_u + np.tensordot(theta[:m], basis[:m], axes=1))
        v = np.abs(base_v + np.tensordot(theta[m:2 * m], basis[m:], axes=1))
        return FieldPair(u, math.exp(theta[-1]) * v, grid)

    def _perturbations(self, grid, index):
        rng = self.rng(index)
        k2 = grid.wavenumber_sq()
        out = []
        for _ in range(2 * self.n_modes):
            noise = rng.standard_normal(grid.shape)
            f = np.fft.ifftn(np.fft.fftn(noise) * np.exp(-2.0 * k2)).real
            f *= np.exp(-0.5 * grid.radius_sq() / 4.0)
            out.append(f / np.max(np.abs(f)))
        return np.array(out)

    def emit(self, grid, index: int, alpha: float, beta: float) -> tuple[np.ndarray, FieldPair]:
        """Parameters and prescaled pair of start ``index``; resamples outside the cone."""
        for attempt in range(MAX_RETRIES):
            theta = self.initial_parameters(grid, index, attempt)
            pair = self.prescale * self.build(grid, theta, index)
            if in_cone(pair, alpha, beta):
                return theta, pair
        raise SamplerError(f"start {index}: no pair in the coupling cone after {MAX_RETRIES} draws")


def _unit(n):
    e = np.zeros(n)
    e[0] = 1.0
    return e


class StartResult(NamedTuple):
    start_id: int
    value: float
    search_value: float
    iterations: int
    refine_iterations: int
    pair: FieldPair


@dataclass
class ExtremalEstimate:
    """Result of a multi-start estimate of one extremal parameter.

    ``which`` is ``"n"`` for lambda^* (Lambda_n) or ``"e"`` for lambda_* (Lambda_e).
    """

    which: str
    value: float
    argmin_pair: FieldPair
    starts: list = field(default_factory=list)
    lower_bound_diag: float = float("nan")

    @property
    def per_start_values(self) -> list[float]:
        return [s.value for s in self.starts]

    def rows(self) -> list[dict]:
        return [{"start_id": s.start_id, "functional": f"Lambda_{self.which}",
                 "lambda_value": s.value, "iterations": s.iterations + s.refine_iterations}
                for s in self.starts]


# --- Lambda evaluation and gradient -------------------------------------------

def _normalised(params, pair):
    co = coefficients_of(pair, params)
    k = 1.0 / math.sqrt(co.a)
    return k * pair, co.scaled(k)


def lambda_of(params: ProblemParams, pair: FieldPair, which: str) -> float:
    """``Lambda_n`` or ``Lambda_e`` of a pair; ``inf`` outside the coupling cone."""
    e = params.exp
    if not in_cone(pair, e.alpha, e.beta):
        return math.inf
    _, co = _normalised(params, pair)
    return fb.lambda_n_value(co) if which == "n" else fb.lambda_e_value(co)


def _quotient_gradient(params, z, which, R):
    """L2 representative of the derivative of R_n (or R_e) at ``z``, with value R."""
    e, g, th = params.exp, z.grid, params.theta
    V1, V2 = params.potential_arrays()
    co = coefficients_of(z, params)
    au, av = np.abs(z.u), np.abs(z.v)
    da = (2 * (fractional_laplacian_apply(z.u, g) + V1 * z.u),
          2 * (fractional_laplacian_apply(z.v, g) + V2 * z.v))
    db = (th * e.alpha * _odd_power(z.u, e.alpha) * av ** e.beta,
          th * e.beta * au ** e.alpha * _odd_power(z.v, e.beta))
    dc = (e.p * _odd_power(z.u, e.p), e.q * _odd_power(z.v, e.q))
    if which == "n":
        G = co.c + co.d
        parts = [(da[i] - db[i] - R * dc[i]) / G for i in range(2)]
    else:
        G = co.c / e.p + co.d / e.q
        parts = [(0.5 * da[0] - db[0] / e.eta - R * dc[0] / e.p) / G,
                 (0.5 * da[1] - db[1] / e.eta - R * dc[1] / e.q) / G]
    return FieldPair(parts[0], parts[1], g)


def lambda_gradient(params: ProblemParams, pair: FieldPair, which: str) -> FieldPair:
    """L2 representative of the derivative of ``Lambda_n`` / ``Lambda_e`` at ``pair``.

    With ``t`` the maximiser along the ray, ``Lambda(w) = R(t w)`` and
    ``dt/dw`` drops out because ``t`` is stationary, so the derivative is
    ``t R'(t w)``.
    """
    co = coefficients_of(pair, params)
    t = fb.find_t_n(co) if which == "n" else fb.find_t_e(co)
    R = fb.q_n(co, t) if which == "n" else fb.q_e(co, t)
    return t * _quotient_gradient(params, t * pair, which, R)


# --- search stages -------------------------------------------------------------

@dataclass(frozen=True)
class SearchSettings:
    max_iter: int = 200
    initial_step: float = 0.5
    shrink: float = 0.5
    min_step: float = 1e-6
    refine_iter: int = 300
    refine_rtol: float = 1e-7
    refine_step: float = 1.0


def pattern_search(fun, theta0: np.ndarray, settings: SearchSettings):
    """Compass search: poll +-step on each coordinate, shrink when no poll improves."""
    theta = np.array(theta0, dtype=float)
    best = fun(theta)
    step = settings.initial_step
    it = 0
    while it < settings.max_iter and step >= settings.min_step:
        it += 1
        improved = False
        for i in range(theta.size):
            for sign in (1.0, -1.0):
                trial = theta.copy()
                trial[i] += sign * step
                val = fun(trial)
                if val < best:
                    theta, best, improved = trial, val, True
                    break
        if not improved:
            step *= settings.shrink
    return theta, best, it


def refine(params: ProblemParams, pair: FieldPair, which: str, settings: SearchSettings,
           riesz=None):
    """X-preconditioned descent of ``Lambda`` on the full field, kept nonnegative.

    Returns ``(pair, value, iterations)`` with the pair normalised to unit X norm.
    """
    if riesz is None:
        V1, V2 = params.potential_arrays()
        riesz = (RieszMap(params.grid, V1), RieszMap(params.grid, V2))
    w, _ = _normalised(params, pair.abs())
    val = lambda_of(params, w, which)
    it = 0
    for it in range(1, settings.refine_iter + 1):
        g = lambda_gradient(params, w, which)
        y = FieldPair(riesz[0](g.u), riesz[1](g.v), g.grid)
        slope = pair_inner(g, y)
        if math.sqrt(max(slope, 0.0)) <= settings.refine_rtol * val:
            break
        sigma = settings.refine_step
        accepted = None
        for _ in range(30):
            trial = (w - sigma * y).abs()
            tv = lambda_of(params, trial, which)
            if tv <= val - 1e-4 * sigma * slope:
                accepted = trial
                break
            sigma *= 0.5
        if accepted is None:
            break
        w, _ = _normalised(params, accepted)
        val = tv
    return w, val, it


def _estimate(params: ProblemParams, sampler: DirectionSampler, which: str,
              settings: SearchSettings | None = None, refine_stage: bool = True) -> ExtremalEstimate:
    settings = settings or SearchSettings()
    e = params.exp
    V1, V2 = params.potential_arrays()
    riesz = (RieszMap(params.grid, V1), RieszMap(params.grid, V2))
    starts = []
    failures = 0
    for i in range(sampler.count):
        try:
            theta0, pair0 = sampler.emit(params.grid, i, e.alpha, e.beta)
        except SamplerError as exc:
            log.warning("%s", exc)
            failures += 1
            continue
        if sampler.searchable:
            def fun(th, i=i):
                return lambda_of(params, sampler.prescale * sampler.build(params.grid, th, i), which)
            theta, search_val, iters = pattern_search(fun, theta0, settings)
            pair = sampler.prescale * sampler.build(params.grid, theta, i)
        else:
            pair, iters = pair0, 0
            search_val = lambda_of(params, pair, which)
        value, r_it, best = search_val, 0, pair
        if refine_stage and sampler.searchable:
            # refine only accepts decreasing steps, so value <= search_val
            best, value, r_it = refine(params, pair, which, settings, riesz)
        starts.append(StartResult(i, value, search_val, iters, r_it, best))
    if not starts:
        raise SamplerError(f"all {sampler.count} starts failed to produce a pair in the coupling cone")
    best_start = min(starts, key=lambda s: (s.value, s.start_id))
    return ExtremalEstimate(which, best_start.value, best_start.pair, starts,
                            lower_bound(params, which))


def estimate_lambda_star(params: ProblemParams, sampler: DirectionSampler,
                         settings: SearchSettings | None = None,
                         refine_stage: bool = True) -> ExtremalEstimate:
    """Multi-start estimate of ``lambda^* = inf Lambda_n`` (an upper bound)."""
    return _estimate(params, sampler, "n", settings, refine_stage)


def estimate_lambda_lower_star(params: ProblemParams, sampler: DirectionSampler,
                               settings: SearchSettings | None = None,
                               refine_stage: bool = True) -> ExtremalEstimate:
    """Multi-start estimate of ``lambda_* = inf Lambda_e`` (an upper bound)."""
    return _estimate(params, sampler, "e", settings, refine_stage)


# --- diagnostics ---------------------------------------------------------------

class EmbeddingConstants(NamedTuple):
    s_p: float
    s_q: float
    s_eta: float


def embedding_constants(params: ProblemParams, seed: int = 0) -> EmbeddingConstants:
    """Numerical estimates of the embedding constants, maximised over both potentials."""
    e, g = params.exp, params.grid
    Vs = params.potential_arrays()

    def best(r):
        return max(estimate_embedding_constant(g, V, r, seed) for V in Vs)

    return EmbeddingConstants(best(e.p), best(e.q), best(e.eta))


def lower_bound(params: ProblemParams, which: str, consts: EmbeddingConstants | None = None) -> float:
    """Constructive positive floor for ``lambda^*`` (``"n"``) or ``lambda_*`` (``"e"``).

    At the maximiser along a ray the coupling obeys ``f(q) a <= b <= f(p) a``
    with ``f(x) = (2 - x)/(eta - x)`` (scaled by ``eta/2`` for Lambda_e). The
    left inequality with ``b <= theta S_eta^eta a^(eta/2)`` bounds the norm
    below by ``delta``; the right one bounds the numerator below by a multiple
    of ``a``; the embeddings bound the denominator above.
    """
    e, th = params.exp, params.theta
    consts = consts or embedding_constants(params)
    S = max(consts.s_p ** e.p, consts.s_q ** e.q)
    f_q, f_p = fb.coupling_sandwich(e)
    scale = 1.0 if which == "n" else e.eta / 2
    delta = (scale * f_q / (th * consts.s_eta ** e.eta)) ** (1 / (e.eta - 2))
    ratio = min(delta ** (2 - e.p), delta ** (2 - e.q)) / (2 * S)
    if which == "n":
        return (1 - f_p) * ratio
    return e.p * (1 - f_p) / 2 * ratio


def el_residual(params: ProblemParams, pair: FieldPair, lambda_star_hat: float,
                scale: bool = True) -> float:
    """Relative L2 residual of the Euler-Lagrange system of ``Lambda_n`` at ``lambda_star_hat``.

    The system is ``2((-Delta)^s + V) z = lambda p |z|^(p-2) z + theta alpha |z1|^(alpha-2) z1 |z2|^beta``
    (and its partner for the second field), evaluated at ``t_n(pair) pair``
    (or at ``pair`` itself if ``scale`` is false), divided by the L2 norm of
    the left-hand side.
    """
    e, g, th = params.exp, pair.grid, params.theta
    z = pair
    if scale:
        z = fb.find_t_n(coefficients_of(pair, params)) * pair
    V1, V2 = params.potential_arrays()
    lhs = (2 * (fractional_laplacian_apply(z.u, g) + V1 * z.u),
           2 * (fractional_laplacian_apply(z.v, g) + V2 * z.v))
    au, av = np.abs(z.u), np.abs(z.v)
    rhs = (lambda_star_hat * e.p * _odd_power(z.u, e.p) + th * e.alpha * _odd_power(z.u, e.alpha) * av ** e.beta,
           lambda_star_hat * e.q * _odd_power(z.v, e.q) + th * e.beta * au ** e.alpha * _odd_power(z.v, e.beta))
    num = sum(inner(lhs[i] - rhs[i], lhs[i] - rhs[i], g) for i in range(2))
    den = sum(inner(lhs[i], lhs[i], g) for i in range(2))
    return math.sqrt(num / den)


def summary(est_n: ExtremalEstimate, est_e: ExtremalEstimate, seed: int) -> dict:
    return {
        "lambda_star_hat": est_n.value,
        "lambda_lower_star_hat": est_e.value,
        "gap": est_n.value - est_e.value,
        "ratio": est_e.value / est_n.value,
        "lower_bound_lambda_star": est_n.lower_bound_diag,
        "lower_bound_lambda_lower_star": est_e.lower_bound_diag,
        "starts": len(est_n.starts),
        "seed": seed,
    }
