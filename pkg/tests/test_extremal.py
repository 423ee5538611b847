import math

import numpy as np
import pytest

from nehari_lab import fibering as fb
from nehari_lab.energy import ProblemParams, pair_inner
from nehari_lab.exceptions import DomainError, SamplerError
from nehari_lab.extremal import (FAMILIES, DirectionSampler, SearchSettings, el_residual,
                                 embedding_constants, estimate_lambda_lower_star,
                                 estimate_lambda_star, lambda_gradient, lambda_of, lower_bound,
                                 pattern_search, summary)
from nehari_lab.fields import (FieldPair, GridSpec, coefficients_of, gaussian, gaussian_pair,
                               in_cone)

FAST = SearchSettings(max_iter=40, refine_iter=40)


def fourier_interpolate(f, n_fine):
    n = f.size
    F = np.fft.fft(f)
    G = np.zeros(n_fine, complex)
    G[:n // 2] = F[:n // 2]
    G[-n // 2:] = F[-n // 2:]
    return np.fft.ifft(G).real * n_fine / n


@pytest.fixture(scope="module")
def coarse():
    return ProblemParams(fb.Exponents(1.2, 1.5, 2.0, 2.0), grid=GridSpec(points_per_dim=128))


@pytest.mark.parametrize("family", FAMILIES[:-1])
def test_sampler_is_deterministic_and_in_cone(family, params1):
    g = params1.grid
    a = DirectionSampler(seed=3, family=family, count=6)
    b = DirectionSampler(seed=3, family=family, count=6)
    for i in range(6):
        ta, pa = a.emit(g, i, 2.0, 2.0)
        tb, pb = b.emit(g, i, 2.0, 2.0)
        assert np.array_equal(ta, tb) and np.array_equal(pa.u, pb.u) and np.array_equal(pa.v, pb.v)
        assert in_cone(pa, 2.0, 2.0)
        assert ta.size == a.dimension(g)


def test_sampler_seeds_differ(params1):
    g = params1.grid
    t0, _ = DirectionSampler(seed=0).emit(g, 0, 2.0, 2.0)
    t1, _ = DirectionSampler(seed=1).emit(g, 0, 2.0, 2.0)
    assert not np.array_equal(t0, t1)


def test_sampler_works_in_two_dimensions(params2):
    s = DirectionSampler(count=3)
    theta, pair = s.emit(params2.grid, 2, 1.5, 1.5)
    assert theta.size == 7 and pair.u.shape == (64, 64)


@pytest.mark.parametrize("kw", [dict(family="sobol"), dict(count=0), dict(prescale=0.0),
                                dict(family="fixed")])
def test_sampler_rejects_bad_settings(kw):
    with pytest.raises(DomainError):
        DirectionSampler(**kw)


def test_sampler_error_when_cone_is_unreachable(params1):
    g = params1.grid
    # two bumps 30 apart on a box of half width 16 never overlap numerically
    far = FieldPair(gaussian(g, -15.0, 0.3), gaussian(g, 15.0, 0.3), g)
    with pytest.raises(SamplerError):
        estimate_lambda_star(params1, DirectionSampler.fixed(far))


def test_lambda_of_outside_cone_is_inf(params1):
    g = params1.grid
    pair = FieldPair(gaussian(g), np.zeros(g.shape), g)
    assert lambda_of(params1, pair, "n") == math.inf


def test_fixed_pair_estimate_is_its_lambda_n(params1):
    pair = gaussian_pair(params1.grid, 0.3, 1.2, 0.8)
    est = estimate_lambda_star(params1, DirectionSampler.fixed(pair))
    co = coefficients_of(pair, params1)
    assert est.value == pytest.approx(fb.lambda_n_value(co), rel=1e-12)
    assert est.per_start_values == [est.value]


@pytest.mark.parametrize("which", ["n", "e"])
def test_pq_family_matches_closed_forms(which, params_pq):
    # with p == q the per-start values of a fixed direction equal the explicit maxima
    for offset, width, ratio in [(0.0, 1.0, 1.0), (0.4, 1.7, 0.6), (1.2, 0.8, 2.0)]:
        pair = gaussian_pair(params_pq.grid, offset, width, ratio)
        est = _estimate_fixed(params_pq, pair, which)
        cf = fb.closed_form_pq(coefficients_of(pair, params_pq), params_pq.theta)
        target = cf.lambda_n if which == "n" else cf.lambda_e
        assert est.value == pytest.approx(target, rel=1e-8)


def _estimate_fixed(params, pair, which):
    fn = estimate_lambda_star if which == "n" else estimate_lambda_lower_star
    return fn(params, DirectionSampler.fixed(pair))


def test_lambda_is_zero_homogeneous(params1):
    pair = gaussian_pair(params1.grid, 0.3, 1.2, 0.8)
    for which in "ne":
        base = lambda_of(params1, pair, which)
        for k in (1e-3, 0.5, 3.0, 40.0):
            assert lambda_of(params1, k * pair, which) == pytest.approx(base, rel=1e-11)


def test_lambda_gradient_matches_finite_differences(params1):
    pair = gaussian_pair(params1.grid, 0.3, 1.2, 0.8)
    rng = np.random.default_rng(4)
    g = params1.grid
    for which in "ne":
        grad = lambda_gradient(params1, pair, which)
        for _ in range(3):
            d = FieldPair(*(0.05 * gaussian(g, c, 1.0) * (1 + 0.3 * np.cos(g.axis()))
                            for c in rng.uniform(-1, 1, 2)), g)
            h = 1e-5
            fd = (lambda_of(params1, pair + h * d, which) - lambda_of(params1, pair - h * d, which)) / (2 * h)
            assert pair_inner(grad, d) == pytest.approx(fd, rel=1e-5)


def test_pattern_search_on_quadratic():
    theta, val, _ = pattern_search(lambda t: float(np.sum((t - 1.5) ** 2)), np.zeros(3),
                                   SearchSettings(max_iter=500))
    assert val < 1e-10 and np.allclose(theta, 1.5, atol=1e-5)


def test_more_starts_never_increase_the_estimate(coarse):
    small = estimate_lambda_star(coarse, DirectionSampler(count=2), FAST)
    large = estimate_lambda_star(coarse, DirectionSampler(count=5), FAST)
    assert large.value <= small.value
    # nested streams: the first starts are reproduced exactly
    assert large.per_start_values[:2] == small.per_start_values


def test_prescale_leaves_estimates_unchanged(coarse):
    for fn in (estimate_lambda_star, estimate_lambda_lower_star):
        a = fn(coarse, DirectionSampler(count=2), FAST, refine_stage=False)
        b = fn(coarse, DirectionSampler(count=2, prescale=3.0), FAST, refine_stage=False)
        assert abs(a.value - b.value) <= 1e-10 * a.value


def test_refinement_only_lowers_values(coarse):
    est = estimate_lambda_star(coarse, DirectionSampler(count=2), FAST)
    for s in est.starts:
        assert s.value <= s.search_value


def test_gap_between_estimates_and_pointwise(coarse):
    n = estimate_lambda_star(coarse, DirectionSampler(count=3), FAST)
    e = estimate_lambda_lower_star(coarse, DirectionSampler(count=3), FAST)
    assert e.value < n.value
    for s in n.starts + e.starts:
        assert lambda_of(coarse, s.pair, "e") < lambda_of(coarse, s.pair, "n")
    out = summary(n, e, seed=0)
    assert out["gap"] > 0 and 0 < out["ratio"] < 1
    assert {r["functional"] for r in n.rows()} == {"Lambda_n"}


def test_lower_bounds_are_positive_and_below_estimates(coarse):
    consts = embedding_constants(coarse)
    n_floor = lower_bound(coarse, "n", consts)
    e_floor = lower_bound(coarse, "e", consts)
    assert 0 < e_floor and 0 < n_floor
    n = estimate_lambda_star(coarse, DirectionSampler(count=2), FAST)
    e = estimate_lambda_lower_star(coarse, DirectionSampler(count=2), FAST)
    assert n_floor < n.value and e_floor < e.value


def test_el_residual_is_large_away_from_a_minimiser(params1):
    pair = gaussian_pair(params1.grid, 1.5, 0.6, 3.0)
    lam = lambda_of(params1, pair, "n")
    assert el_residual(params1, pair, lam) > 0.05


def test_el_residual_small_at_the_refined_argmin(coarse):
    est = estimate_lambda_star(coarse, DirectionSampler(count=1))
    assert el_residual(coarse, est.argmin_pair, est.value) < 1e-6
    # without the fibering scale the pair is not a critical point
    assert el_residual(coarse, est.argmin_pair, est.value, scale=False) > 1e-2


def test_el_residual_decreases_under_mesh_refinement():
    # argmin on a coarse mesh, transferred spectrally to a fine mesh and measured there
    exp = fb.Exponents(1.2, 1.5, 2.0, 2.0)
    fine = ProblemParams(exp, grid=GridSpec(points_per_dim=512))
    residuals = []
    for n in (32, 64, 128):
        P = ProblemParams(exp, grid=GridSpec(points_per_dim=n))
        z = estimate_lambda_star(P, DirectionSampler(count=1)).argmin_pair
        zf = FieldPair(fourier_interpolate(z.u, 512), fourier_interpolate(z.v, 512), fine.grid)
        residuals.append(el_residual(fine, zf, lambda_of(fine, zf, "n")))
    assert residuals[0] > residuals[1] > residuals[2]
    assert residuals[2] < 0.1 * residuals[0]
