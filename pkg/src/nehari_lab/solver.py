"""Minimise the energy on the N+ and N- Nehari branches.

The iterate always sits on the requested branch. One outer step:

1. take the X-gradient ``y`` of ``E`` at the current pair ``z``;
2. trial pair ``|z - sigma y|`` (absolute values keep minimising sequences
   nonnegative);
3. re-project the trial onto the branch along its ray (``t_plus`` or ``t_minus``);
4. accept on Armijo decrease, otherwise halve ``sigma``.

Because ``E'(z)(z) = 0`` on the Nehari set, the map ``w -> E(t(w) w)`` has
derivative ``E'(z)`` at ``z``, so ``-y`` is a descent direction for it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import fibering as fb
from .energy import (Branch, NehariClass, ProblemParams, classify_coefficients,
                     energy_from_coefficients, gradient, pair_inner, sup_norm)
from .exceptions import BranchFailureError, DomainError, NoProjectionError
from .fields import (FieldPair, RieszMap, coefficients_of, coupling_integral,
                     gaussian, in_cone)

log = logging.getLogger(__name__)


@dataclass
class SolveConfig:
    lam: float
    branch: Branch = Branch.MINUS
    max_outer: int = 5000
    grad_tol: float = 1e-6
    step0: float = 0.1
    armijo: float = 1e-4
    max_halvings: int = 30
    seed: int = 0
    lambda_star_hat: float | None = None
    lambda_lower_star_hat: float | None = None
    max_lambda_fraction: float = 0.95

    def __post_init__(self):
        self.branch = Branch(self.branch)
        if not self.lam > 0:
            raise DomainError(f"lambda must be positive, got {self.lam}")
        if not self.grad_tol > 0:
            raise DomainError(f"grad_tol must be positive, got {self.grad_tol}")


@dataclass
class SolutionReport:
    pair: FieldPair
    energy: float
    nehari_class: NehariClass
    grad_norm: float
    coupling: float
    min_value_u: float
    min_value_v: float
    branch: str
    lam: float
    converged: bool
    iterations: int
    regime: str
    t_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    slopes: list = field(default_factory=list)

    @property
    def positive(self) -> bool:
        return self.min_value_u > 0 and self.min_value_v > 0

    def summary(self) -> dict:
        return {
            "branch": self.branch,
            "lambda": self.lam,
            "energy": self.energy,
            "class": self.nehari_class.tag,
            "d1": self.nehari_class.d1,
            "d2": self.nehari_class.d2,
            "grad_norm": self.grad_norm,
            "coupling": self.coupling,
            "min_value_u": self.min_value_u,
            "min_value_v": self.min_value_v,
            "converged": self.converged,
            "iterations": self.iterations,
            "regime": self.regime,
        }


def project(params: ProblemParams, pair: FieldPair, branch) -> tuple[FieldPair, float]:
    """Scale ``pair`` onto the requested Nehari branch; returns ``(scaled, t)``."""
    branch = Branch(branch)
    co = coefficients_of(pair, params)
    if not co.in_cone:
        raise NoProjectionError("pair has zero coupling; no two-sided projection")
    cp = fb.solve_projections(co, params.lam)
    if cp.is_double:
        raise NoProjectionError(
            f"lambda={params.lam} equals Lambda_n of this pair: double root on N0",
            lambda_n=fb.q_n(co, cp.t_max))
    t = cp.t_plus if branch is Branch.PLUS else cp.t_minus
    return t * pair, t


def initial_pair(grid, seed: int = 0, offset: float = 0.5, width: float = 1.5) -> FieldPair:
    """Two overlapping Gaussian bumps with seed-controlled jitter."""
    rng = np.random.default_rng(seed)
    shift = np.zeros(grid.dim)
    shift[0] = offset
    jitter = 0.1 * rng.standard_normal((2, grid.dim)) if seed else np.zeros((2, grid.dim))
    widths = width * (1 + 0.1 * rng.uniform(-1, 1, 2)) if seed else (width, width)
    return FieldPair(gaussian(grid, -shift + jitter[0], widths[0]),
                     gaussian(grid, shift + jitter[1], widths[1]), grid)


def regime_tag(lam, lambda_star_hat=None, lambda_lower_star_hat=None) -> str:
    if lambda_star_hat is not None and lam >= lambda_star_hat:
        return "above_lambda_star"
    if lambda_lower_star_hat is None:
        return "below_lambda_star" if lambda_star_hat is not None else "unknown"
    if lam < lambda_lower_star_hat:
        return "below_lambda_lower_star"
    if lam > lambda_lower_star_hat:
        return "between_extremals"
    return "at_lambda_lower_star"


class _Stepper:
    """State shared by the outer loop: Riesz maps and the branch projection."""

    def __init__(self, params, branch):
        V1, V2 = params.potential_arrays()
        self.params, self.branch = params, branch
        self.riesz = (RieszMap(params.grid, V1), RieszMap(params.grid, V2))

    def x_gradient(self, g: FieldPair) -> FieldPair:
        return FieldPair(self.riesz[0](g.u), self.riesz[1](g.v), g.grid)

    def onto_branch(self, pair):
        """Projected pair, its coefficients and scale, or ``None`` if the ray misses."""
        P = self.params
        e = P.exp
        if not in_cone(pair, e.alpha, e.beta):
            return None
        co = coefficients_of(pair, P)
        try:
            cp = fb.solve_projections(co, P.lam)
        except NoProjectionError:
            return None
        if cp.is_double:
            return None
        t = cp.t_plus if self.branch is Branch.PLUS else cp.t_minus
        return t * pair, co.at(t), t


class _SemitrivialStepper(_Stepper):
    """Projection onto the Nehari set of pairs with one field identically zero."""

    def __init__(self, params, component):
        super().__init__(params, Branch.PLUS)
        self.component = component

    def x_gradient(self, g: FieldPair) -> FieldPair:
        zero = np.zeros_like(g.u)
        if self.component == "u":
            return FieldPair(self.riesz[0](g.u), zero, g.grid)
        return FieldPair(zero, self.riesz[1](g.v), g.grid)

    def onto_branch(self, pair):
        P = self.params
        r = P.exp.p if self.component == "u" else P.exp.q
        co = coefficients_of(pair, P)
        mass = co.c if self.component == "u" else co.d
        if not mass > 0:
            return None
        # a t^2 = lam * mass * t^r has the single positive root below
        t = (P.lam * mass / co.a) ** (1 / (2 - r))
        return t * pair, co.at(t), t


def _descend(P, stepper, start, config):
    """Armijo descent along minus the X-gradient, re-projecting every trial."""
    z, co, t = start
    E = energy_from_coefficients(P, co)
    t_hist, e_hist, slopes = [t], [E], []
    g = gradient(P, z)
    gn = _masked_sup(g, stepper)
    it = 0
    converged = gn < config.grad_tol
    while not converged and it < config.max_outer:
        it += 1
        y = stepper.x_gradient(g)
        slope = pair_inner(g, y)
        sigma = config.step0
        accepted = None
        for _ in range(config.max_halvings):
            trial = stepper.onto_branch((z - sigma * y).abs())
            if trial is not None:
                E_new = energy_from_coefficients(P, trial[1])
                drop = config.armijo * sigma * slope
                if E_new <= E - drop or (drop < 1e-13 * abs(E) and E_new <= E):
                    accepted = trial
                    break
            sigma *= 0.5
        if accepted is None:
            log.info("line search stalled at iteration %d (grad %.3e)", it, gn)
            break
        z, co, t = accepted
        E = E_new
        slopes.append(slope)
        t_hist.append(t)
        e_hist.append(E)
        g = gradient(P, z)
        gn = _masked_sup(g, stepper)
        converged = gn < config.grad_tol
    return z, co, E, gn, converged, it, t_hist, e_hist, slopes


def _masked_sup(g, stepper):
    if isinstance(stepper, _SemitrivialStepper):
        return float(np.max(np.abs(g.u if stepper.component == "u" else g.v)))
    return sup_norm(g)


def _check_lambda(config):
    if config.lambda_star_hat is not None:
        limit = config.max_lambda_fraction * config.lambda_star_hat
        if config.lam > limit:
            raise DomainError(
                f"lambda={config.lam} exceeds {config.max_lambda_fraction} * lambda_star_hat "
                f"= {limit}: projections degenerate near N0")


def minimize_branch(params: ProblemParams, config: SolveConfig,
                    initial: FieldPair | None = None) -> SolutionReport:
    """Minimise ``E`` over the requested branch, starting from ``initial``."""
    P = params.with_lambda(config.lam)
    _check_lambda(config)
    branch = config.branch
    stepper = _Stepper(P, branch)
    z0 = (initial if initial is not None else initial_pair(P.grid, config.seed)).abs()
    start = stepper.onto_branch(z0)
    if start is None:
        raise BranchFailureError(
            "initial pair cannot be projected onto the branch (no coupling or lambda too large)",
            {"lambda": config.lam})
    z, co, E, gn, converged, it, t_hist, e_hist, slopes = _descend(P, stepper, start, config)
    e = P.exp
    coupling = coupling_integral(z, e.alpha, e.beta)
    if not in_cone(z, e.alpha, e.beta):
        raise BranchFailureError("coupling collapsed during descent",
                                 {"coupling": coupling, "iterations": it})
    cls = classify_coefficients(P, co)
    return SolutionReport(
        pair=z, energy=E, nehari_class=cls, grad_norm=gn, coupling=coupling,
        min_value_u=float(z.u.min()), min_value_v=float(z.v.min()),
        branch=branch.value, lam=config.lam, converged=converged, iterations=it,
        regime=regime_tag(config.lam, config.lambda_star_hat, config.lambda_lower_star_hat),
        t_history=t_hist, energy_history=e_hist, slopes=slopes)


class SemitrivialResult(NamedTuple):
    component: str
    energy: float
    pair: FieldPair
    grad_norm: float
    converged: bool


def minimize_semitrivial(params: ProblemParams, config: SolveConfig, component: str,
                         initial: FieldPair | None = None) -> SemitrivialResult:
    """Minimise ``E`` over Nehari pairs ``(u, 0)`` (component ``"u"``) or ``(0, v)``."""
    if component not in ("u", "v"):
        raise DomainError(f"component must be 'u' or 'v', got {component!r}")
    P = params.with_lambda(config.lam)
    base = (initial if initial is not None else initial_pair(P.grid, config.seed)).abs()
    zero = np.zeros_like(base.u)
    z0 = FieldPair(base.u, zero, base.grid) if component == "u" else FieldPair(zero, base.v, base.grid)
    stepper = _SemitrivialStepper(P, component)
    start = stepper.onto_branch(z0)
    if start is None:
        raise BranchFailureError(f"semitrivial start has zero {component} field", {})
    z, _, E, gn, converged, *_ = _descend(P, stepper, start, config)
    return SemitrivialResult(component, E, z, gn, converged)


def best_semitrivial(params: ProblemParams, config: SolveConfig,
                     initial: FieldPair | None = None) -> SemitrivialResult:
    """Lower of the two semitrivial Nehari minima."""
    results = [minimize_semitrivial(params, config, c, initial) for c in ("u", "v")]
    return min(results, key=lambda r: r.energy)


class SweepRow(NamedTuple):
    lam: float
    energy: float
    nehari_class: str
    coupling: float
    grad_norm: float
    converged: bool
    error: str


SWEEP_COLUMNS = ("lambda", "energy", "class", "coupling", "grad_norm", "converged", "error")


def lambda_sweep(params: ProblemParams, lambdas, config: SolveConfig,
                 branch=Branch.MINUS) -> list[SweepRow]:
    """Solve on ``branch`` at each lambda; failures are recorded in the row, not raised."""
    rows = []
    for lam in lambdas:
        cfg = replace(config, lam=float(lam), branch=Branch(branch))
        try:
            r = minimize_branch(params, cfg)
            rows.append(SweepRow(float(lam), r.energy, r.nehari_class.tag, r.coupling,
                                 r.grad_norm, r.converged, ""))
        except (BranchFailureError, DomainError, NoProjectionError) as exc:
            nan = float("nan")
            rows.append(SweepRow(float(lam), nan, "Failed", nan, nan, False, str(exc)))
    return rows


def sign_changes(values) -> int:
    signs = [math.copysign(1, v) for v in values if not math.isnan(v) and v != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def zero_crossing(lambdas, energies) -> float:
    """Linear interpolation of the first sign change of ``energies``; ``nan`` if none."""
    pts = [(l, e) for l, e in zip(lambdas, energies) if not math.isnan(e)]
    for (l0, e0), (l1, e1) in zip(pts, pts[1:]):
        if e0 == 0:
            return l0
        if e0 * e1 < 0:
            return l0 + (l1 - l0) * e0 / (e0 - e1)
    return float("nan")
