"""scikit-learn style wrappers around the EigenScore scorers.

Each sample is one generation matrix of shape ``(d, K)``. ``transform``
maps a stack of them, an array of shape ``(n_sets, d, K)`` or a list of
matrices with possibly different shapes, to a ``(n_sets, 1)`` column of
scores so the scorers drop into a :class:`sklearn.pipeline.Pipeline`.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DimensionError
from .scores import DEFAULT_ALPHA, EesConfig, efficient_eigenscore, exact_eigenscore
from .spectral import log_cheb_coefficients


def _as_matrix_list(X):
    if isinstance(X, np.ndarray):
        if X.ndim == 2:
            return [X]
        if X.ndim != 3:
            raise DimensionError(f"expected (n_sets, d, K) array, got shape {X.shape}")
        return list(X)
    mats = list(X)
    if not mats:
        raise DimensionError("no generation matrices given")
    return mats


class EigenScore(BaseEstimator, TransformerMixin):
    """Exact EigenScore of each generation matrix.

    Parameters
    ----------
    alpha : float, default=1e-3
        Ridge added to the covariance before taking log-eigenvalues.
    solver : {"auto", "jacobi", "lapack"}, default="auto"
    """

    def __init__(self, alpha=DEFAULT_ALPHA, solver="auto"):
        self.alpha = alpha
        self.solver = solver

    def fit(self, X=None, y=None):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.solver not in ("auto", "jacobi", "lapack"):
            raise ValueError(f"unknown solver {self.solver!r}")
        self.fitted_ = True
        return self

    def score_samples(self, X):
        check_is_fitted(self, "fitted_")
        return np.array([exact_eigenscore(E, self.alpha, self.solver).value
                         for E in _as_matrix_list(X)])

    def transform(self, X):
        return self.score_samples(X)[:, None]


class EfficientEigenScore(BaseEstimator, TransformerMixin):
    """Efficient EigenScore (Chebyshev moment approximation) per matrix.

    ``fit`` freezes the configuration and precomputes the log coefficients,
    which only depend on ``moments``, ``quad_points`` and ``lambda_floor``.
    """

    def __init__(self, moments=20, trace_samples=32, quad_points=2048, lambda_floor=1e-8,
                 power_tol=1e-4, power_max_iter=5000, power_block=4, scale_margin=0.01,
                 seed=0, probe="gaussian"):
        self.moments = moments
        self.trace_samples = trace_samples
        self.quad_points = quad_points
        self.lambda_floor = lambda_floor
        self.power_tol = power_tol
        self.power_max_iter = power_max_iter
        self.power_block = power_block
        self.scale_margin = scale_margin
        self.seed = seed
        self.probe = probe

    def fit(self, X=None, y=None):
        self.config_ = EesConfig(**self.get_params())
        self.coefficients_ = log_cheb_coefficients(
            self.config_.moments, self.config_.quad_points, self.config_.lambda_floor
        ).coeffs
        return self

    def score_samples(self, X):
        check_is_fitted(self, "config_")
        return np.array([efficient_eigenscore(E, self.config_).value
                         for E in _as_matrix_list(X)])

    def transform(self, X):
        return self.score_samples(X)[:, None]
