"""Polynomial regression basis over the forward and backward path features."""

from itertools import combinations_with_replacement

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

__all__ = ["RegressionBasis", "path_features"]


class RegressionBasis(TransformerMixin, BaseEstimator):
    """Intercept plus all monomials of total degree <= ``degree`` in standardised features.

    Features that are constant on the fitted sample (``W_0 = 0``, for
    instance) are dropped, since after centring they would only duplicate
    the intercept.
    """

    def __init__(self, degree=2, constant_tol=1e-12):
        self.degree = degree
        self.constant_tol = constant_tol

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        self.support_ = scale > self.constant_tol * (1.0 + np.abs(mean))
        self.mean_ = mean[self.support_]
        self.scale_ = scale[self.support_]
        m = int(self.support_.sum())
        self.powers_ = [c for deg in range(1, self.degree + 1) for c in combinations_with_replacement(range(m), deg)]
        self.n_output_features_ = 1 + len(self.powers_)
        return self

    def transform(self, X):
        check_is_fitted(self, "support_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        S = (X[:, self.support_] - self.mean_) / self.scale_
        out = np.empty((X.shape[0], self.n_output_features_))
        out[:, 0] = 1.0
        for col, combo in enumerate(self.powers_, start=1):
            out[:, col] = np.prod(S[:, combo], axis=1)
        return out


def path_features(bundle, backward_features=()):
    """Raw regression features at every grid time, shape ``(n, N + 1, p)``.

    Columns: ``W_t`` (d), ``B_T - B_t`` (l), then ``int_t^T h dB`` for each
    declared integrand ``h`` and each component of B.  The backward columns
    are what make the regression condition on the future of B.
    """
    grid = bundle.grid
    cols = [bundle.W, bundle.B_future()]
    for h in backward_features:
        weights = np.array([h(t) for t in grid.points[1:]], dtype=float)
        inc = bundle.dB * weights[None, :, None]
        rev = np.cumsum(inc[:, ::-1], axis=1)[:, ::-1]
        cols.append(np.concatenate([rev, np.zeros_like(inc[:, :1])], axis=1))
    return np.concatenate(cols, axis=2)
