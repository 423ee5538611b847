"""scikit-learn style wrappers over the projection, solver and extremal routines.

Rows of ``X`` are flattened pairs: the ``u`` samples followed by the ``v``
samples, each in C order on ``params.grid``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .energy import Branch, ProblemParams
from .extremal import DirectionSampler, estimate_lambda_lower_star, estimate_lambda_star
from .fields import FieldPair
from .solver import SolveConfig, minimize_branch, project


def _check_params(params):
    if not isinstance(params, ProblemParams):
        raise TypeError(f"params must be ProblemParams, got {type(params).__name__}")
    return params


def rows_to_pairs(X, grid) -> list[FieldPair]:
    X = check_array(X, dtype=np.float64)
    size = int(np.prod(grid.shape))
    if X.shape[1] != 2 * size:
        raise ValueError(f"expected {2 * size} features (two fields on the grid), got {X.shape[1]}")
    return [FieldPair(r[:size].reshape(grid.shape), r[size:].reshape(grid.shape), grid) for r in X]


def pairs_to_rows(pairs) -> np.ndarray:
    return np.array([np.concatenate([p.u.ravel(), p.v.ravel()]) for p in pairs])


class NehariProjector(TransformerMixin, BaseEstimator):
    """Scale each row onto the requested Nehari branch along its ray."""

    def __init__(self, params=None, branch="NMinus"):
        self.params = params
        self.branch = branch

    def fit(self, X, y=None):
        P = _check_params(self.params)
        Branch(self.branch)
        self.n_features_in_ = len(rows_to_pairs(X, P.grid)[0].stack().ravel())
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        P = self.params
        pairs = rows_to_pairs(X, P.grid)
        self.scales_ = np.array([project(P, pr, self.branch)[1] for pr in pairs])
        return pairs_to_rows([t * pr for t, pr in zip(self.scales_, pairs)])


class NehariSolver(BaseEstimator):
    """Minimise the energy on one branch; ``X`` (optional, one row) is the start."""

    def __init__(self, params=None, lam=0.1, branch="NMinus", grad_tol=1e-6, max_outer=5000, seed=0):
        self.params = params
        self.lam = lam
        self.branch = branch
        self.grad_tol = grad_tol
        self.max_outer = max_outer
        self.seed = seed

    def fit(self, X=None, y=None):
        P = _check_params(self.params)
        initial = rows_to_pairs(X, P.grid)[0] if X is not None else None
        cfg = SolveConfig(lam=self.lam, branch=self.branch, grad_tol=self.grad_tol,
                          max_outer=self.max_outer, seed=self.seed)
        self.report_ = minimize_branch(P, cfg, initial)
        self.energy_ = self.report_.energy
        self.pair_ = self.report_.pair
        return self

    def transform(self, X=None):
        check_is_fitted(self, "report_")
        return pairs_to_rows([self.pair_])


class ExtremalEstimator(BaseEstimator):
    """Multi-start estimates of lambda^* and lambda_*."""

    def __init__(self, params=None, count=32, seed=0, family="gaussian_bumps"):
        self.params = params
        self.count = count
        self.seed = seed
        self.family = family

    def fit(self, X=None, y=None):
        P = _check_params(self.params)
        sampler = DirectionSampler(seed=self.seed, family=self.family, count=self.count)
        self.estimate_n_ = estimate_lambda_star(P, sampler)
        self.estimate_e_ = estimate_lambda_lower_star(P, sampler)
        self.lambda_star_hat_ = self.estimate_n_.value
        self.lambda_lower_star_hat_ = self.estimate_e_.value
        return self
