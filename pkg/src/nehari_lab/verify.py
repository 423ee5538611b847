"""Identity and property suites run by ``nehari-lab verify``.

Each suite returns a :class:`SuiteResult` with the worst observed error and
the tolerance it is held to.
"""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from . import fibering as fb
from .energy import (ProblemParams, derivative_identity_residuals, energy, energy_direct,
                     gradient, pair_inner)
from .fields import (FieldPair, GridSpec, cosine_mode, fractional_laplacian_apply,
                     gaussian, gaussian_pair, inner, plancherel_sq,
                     spectral_inner)


class SuiteResult(NamedTuple):
    name: str
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tol)


SHAPES = ("p=1", "p=q", "p<q")


def random_exponents(rng: np.random.Generator, shape: str) -> fb.Exponents:
    q = rng.uniform(1.05, 1.95)
    if shape == "p=1":
        p = 1.0
    elif shape == "p=q":
        p = q
    else:
        p = rng.uniform(1.0, q - 0.02) if q > 1.03 else 1.0
    alpha, beta = rng.uniform(1.05, 3.0, 2)
    return fb.Exponents(p, q, alpha, beta)


def random_coefficients(rng: np.random.Generator, shape: str | None = None) -> fb.FiberingCoefficients:
    shape = shape or SHAPES[rng.integers(3)]
    a, b, c, d = 10.0 ** rng.uniform(-1.5, 1.5, 4)
    return fb.FiberingCoefficients(a, b, c, d, random_exponents(rng, shape))


def suite_qn_qe(rng, n=300):
    worst = 0.0
    for i in range(n):
        co = random_coefficients(rng, SHAPES[i % 3])
        t = fb.find_t_n(co) * 10 ** rng.uniform(-1, 1)
        worst = max(worst, fb.qn_qe_identity_residual(co, t))
    return SuiteResult("Q_n - Q_e identity", worst, 1e-9)


def suite_stationarity(rng, which, n=300):
    worst = 0.0
    for i in range(n):
        co = random_coefficients(rng, SHAPES[i % 3])
        t = fb.find_t_n(co) if which == "n" else fb.find_t_e(co)
        worst = max(worst, fb.stationarity_coupling_residual(co.at(t), which))
    return SuiteResult(f"stationarity coupling ({which})", worst, 1e-9)


def suite_sandwich(rng, n=300):
    worst = 0.0
    for i in range(n):
        co = random_coefficients(rng, SHAPES[i % 3])
        s = co.at(fb.find_t_n(co))
        lo, hi = fb.coupling_sandwich(co.exp)
        ratio = s.b / s.a
        worst = max(worst, lo - ratio, ratio - hi, 0.0)
    return SuiteResult("coupling sandwich f(q) <= b/a <= f(p)", worst, 1e-12)


def suite_closed_form(rng, n=200):
    worst = 0.0
    for _ in range(n):
        co = random_coefficients(rng, "p=q")
        cf = fb.closed_form_pq(co)
        pairs = ((fb.find_t_n(co), cf.t_n), (fb.find_t_e(co), cf.t_e),
                 (fb.lambda_n_value(co), cf.lambda_n), (fb.lambda_e_value(co), cf.lambda_e))
        worst = max(worst, max(abs(x - y) / abs(y) for x, y in pairs))
    return SuiteResult("closed forms for p = q", worst, 1e-8)


def suite_unique_max(rng, n=100, points=10_000):
    worst = 0.0
    for i in range(n):
        co = random_coefficients(rng, SHAPES[i % 3])
        t_n = fb.find_t_n(co)
        ts = np.linspace(t_n / 50, 5 * t_n, points)
        vals = np.array([fb.q_n(co, t) for t in ts])
        dv = np.sign(np.diff(vals))
        changes = int(np.count_nonzero(dv[1:] != dv[:-1]))
        k = int(np.argmax(vals))
        miss = abs(ts[k] - t_n) / (ts[1] - ts[0])
        worst = max(worst, abs(changes - 1) * 10.0, max(miss - 1.0, 0.0))
    return SuiteResult("unique maximum of Q_n", worst, 0.0)


def suite_constant_inequality():
    failures = sum(1 for q in np.linspace(1.01, 1.99, 50) for eta in np.linspace(2.05, 6.0, 50)
                   if not fb.constant_inequality_check(q, eta))
    return SuiteResult("C_n / C_e > 1 on the 50x50 (q, eta) grid", float(failures), 0.0)


def suite_homogeneity(rng, n=200):
    worst = 0.0
    for i in range(n):
        co = random_coefficients(rng, SHAPES[i % 3])
        k = 10 ** rng.uniform(-1, 1)
        s = co.scaled(k)
        for f in (fb.lambda_n_value, fb.lambda_e_value):
            worst = max(worst, abs(f(s) - f(co)) / f(co))
    return SuiteResult("0-homogeneity of Lambda_n, Lambda_e", worst, 1e-10)


def suite_gap(rng, n=200):
    failures = 0
    for i in range(n):
        co = random_coefficients(rng, SHAPES[i % 3])
        failures += not fb.lambda_e_value(co) < fb.lambda_n_value(co)
    return SuiteResult("Lambda_e < Lambda_n per direction", float(failures), 0.0)


def suite_derivative_identities(rng, params: ProblemParams, n=60):
    worst_n = worst_e = 0.0
    g = params.grid
    for _ in range(n):
        pair = gaussian_pair(g, offset=rng.uniform(0, 1), width=rng.uniform(0.8, 2.5),
                             ratio=10 ** rng.uniform(-0.5, 0.5))
        r = derivative_identity_residuals(params, pair, 10 ** rng.uniform(-1, 1))
        worst_n, worst_e = max(worst_n, r.res_n), max(worst_e, r.res_e)
    return [SuiteResult("t G R_n' = E'' on fields", worst_n, 1e-9),
            SuiteResult("t G_e R_e' = E' on fields", worst_e, 1e-9)]


def suite_spectral(grid: GridSpec, rng):
    f = gaussian(grid, 0.3, 1.2) + 0.1 * cosine_mode(grid, 2)
    h = gaussian(grid, -0.5, 0.9)
    pl = abs(plancherel_sq(f, grid) - inner(f, f, grid)) / inner(f, f, grid)
    a = inner(f, fractional_laplacian_apply(h, grid), grid)
    b = inner(h, fractional_laplacian_apply(f, grid), grid)
    c = spectral_inner(f, h, grid)
    sym = max(abs(a - b), abs(a - c)) / abs(c)
    worst = 0.0
    for m in (1, 3, 7):
        mode = cosine_mode(grid, m)
        k = m * math.pi / grid.half_width
        lhs = fractional_laplacian_apply(mode, grid)
        worst = max(worst, float(np.max(np.abs(lhs - k ** (2 * grid.s) * mode))) / k ** (2 * grid.s))
    return [SuiteResult("Plancherel", pl, 1e-12),
            SuiteResult("operator/form symmetry", sym, 1e-12),
            SuiteResult("single-mode eigenvalue |k|^(2s)", worst, 1e-12)]


def suite_energy_paths(params: ProblemParams):
    pair = gaussian_pair(params.grid)
    e1, e2 = energy(params, pair), energy_direct(params, pair)
    return SuiteResult("energy: coefficients vs fields", abs(e1 - e2) / abs(e2), 1e-12)


def suite_gradient(rng, params: ProblemParams, n=5):
    g = params.grid
    pair = gaussian_pair(g, width=2.0) + FieldPair(np.full(g.shape, 0.05), np.full(g.shape, 0.05), g)
    worst = 0.0
    grad = gradient(params, pair)
    for _ in range(n):
        d = FieldPair(pair.u * rng.standard_normal(g.shape) * 0.1,
                      pair.v * rng.standard_normal(g.shape) * 0.1, g)
        d = FieldPair(_smooth(d.u, g), _smooth(d.v, g), g)
        h = 1e-4
        fd = (energy(params, pair + h * d) - energy(params, pair - h * d)) / (2 * h)
        an = pair_inner(grad, d)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    return SuiteResult("gradient vs central differences", worst, 1e-6)


def _smooth(f, grid):
    return np.fft.ifftn(np.fft.fftn(f) * np.exp(-0.5 * grid.wavenumber_sq())).real


def run_all(params: ProblemParams, seed: int = 0) -> list[SuiteResult]:
    rng = np.random.default_rng(seed)
    suites: list[Callable[[], object]] = [
        lambda: suite_qn_qe(rng),
        lambda: suite_stationarity(rng, "n"),
        lambda: suite_stationarity(rng, "e"),
        lambda: suite_sandwich(rng),
        lambda: suite_closed_form(rng),
        lambda: suite_unique_max(rng),
        suite_constant_inequality,
        lambda: suite_homogeneity(rng),
        lambda: suite_gap(rng),
        lambda: suite_derivative_identities(rng, params),
        lambda: suite_spectral(params.grid, rng),
        lambda: suite_energy_paths(params),
        lambda: suite_gradient(rng, params),
    ]
    out: list[SuiteResult] = []
    for s in suites:
        r = s()
        out.extend(r if isinstance(r, list) else [r])
    return out
