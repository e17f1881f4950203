"""Exact EigenScore and its spectral approximation (EES)."""

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._validation import check_matrix
from .exceptions import (
    ConvergenceError,
    DegenerateSpectrumError,
    InsufficientSamplesError,
    ScoringError,
)
from .linalg import DEGENERATE_STD, power_method, standardize_columns, symmetric_eigenvalues
from .spectral import combine_ees, dos_moments, log_cheb_coefficients

DEFAULT_ALPHA = 1e-3
#: exact path switches from the Jacobi oracle to LAPACK above this many generations
JACOBI_MAX_K = 64


@dataclass(frozen=True)
class EesConfig:
    """Knobs of the efficient EigenScore approximation."""

    moments: int = 20
    trace_samples: int = 32
    quad_points: int = 2048
    lambda_floor: float = 1e-8
    power_tol: float = 1e-4
    power_max_iter: int = 5000
    power_block: int = 4
    scale_margin: float = 0.01
    seed: int = 0
    probe: str = "gaussian"

    def __post_init__(self):
        if self.moments < 0:
            raise ValueError(f"moments must be >= 0, got {self.moments}")
        if self.trace_samples < 1:
            raise ValueError(f"trace_samples must be >= 1, got {self.trace_samples}")
        if self.quad_points < 4 * (self.moments + 1):
            raise ValueError(
                f"quad_points must be >= 4*(moments+1) = {4 * (self.moments + 1)}, "
                f"got {self.quad_points}"
            )
        if not 0.0 < self.lambda_floor <= 1e-3:
            raise ValueError(f"lambda_floor must lie in (0, 1e-3], got {self.lambda_floor}")
        if not self.power_tol > 0:
            raise ValueError(f"power_tol must be positive, got {self.power_tol}")
        if self.power_max_iter < 1:
            raise ValueError(f"power_max_iter must be >= 1, got {self.power_max_iter}")
        if self.power_block < 1:
            raise ValueError(f"power_block must be >= 1, got {self.power_block}")
        if not 0.0 <= self.scale_margin < 1.0:
            raise ValueError(f"scale_margin must lie in [0, 1), got {self.scale_margin}")
        if self.probe not in ("gaussian", "rademacher"):
            raise ValueError(f"probe must be 'gaussian' or 'rademacher', got {self.probe!r}")

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


@dataclass
class ScoreReport:
    value: float
    method: str
    elapsed_seconds: float
    matrix_rows: int
    matrix_cols: int
    config_echo: object
    details: dict = field(default_factory=dict)

    def to_dict(self):
        echo = self.config_echo
        if isinstance(echo, EesConfig):
            echo = echo.to_dict()
        return {
            "value": self.value,
            "method": self.method,
            "elapsed_seconds": self.elapsed_seconds,
            "matrix_rows": self.matrix_rows,
            "matrix_cols": self.matrix_cols,
            "config": echo,
            "details": dict(self.details),
        }


def _check_generations(E):
    E = check_matrix(E, "E")
    if E.shape[1] < 2:
        raise InsufficientSamplesError(
            f"EigenScore needs at least 2 generations (columns), got {E.shape[1]}"
        )
    return E


def exact_eigenscore(E, alpha=DEFAULT_ALPHA, solver="auto"):
    """Mean log-eigenvalue of the regularized covariance of the generations.

    Columns of ``E`` (shape ``(d, K)``) are the ``K`` generation embeddings.
    They are centered about their mean column, the ``K x K`` covariance
    ``Sigma = Ec^T Ec`` is regularized to ``Sigma + alpha I``, and the score
    is ``(1/K) sum_i log(lambda_i)``.

    Parameters
    ----------
    solver : {"auto", "jacobi", "lapack"}
        ``"auto"`` uses the Jacobi oracle for ``K <= 64`` and LAPACK above.
    """
    start = time.perf_counter()
    E = _check_generations(E)
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    K = E.shape[1]
    if solver == "auto":
        solver = "jacobi" if K <= JACOBI_MAX_K else "lapack"
    if solver not in ("jacobi", "lapack"):
        raise ValueError(f"unknown solver {solver!r}")

    Ec = E - E.mean(axis=1, keepdims=True)
    sigma = Ec.T @ Ec
    sigma = 0.5 * (sigma + sigma.T)
    sigma[np.diag_indices(K)] += alpha
    if solver == "jacobi":
        lam = symmetric_eigenvalues(sigma)
    else:
        lam = np.linalg.eigvalsh(sigma)
    if lam[0] <= 0:
        raise ScoringError(f"regularized covariance is not positive definite (min eig {lam[0]:.3g})")
    value = float(np.mean(np.log(lam)))
    return ScoreReport(
        value=value,
        method="exact",
        elapsed_seconds=time.perf_counter() - start,
        matrix_rows=E.shape[0],
        matrix_cols=K,
        config_echo=float(alpha),
        details={"solver": solver},
    )


def efficient_eigenscore(E, cfg=None):
    """Efficient EigenScore of the generation matrix ``E`` (shape ``(d, K)``).

    Pipeline: standardize each embedding dimension across the generations,
    estimate the top singular value by power iteration and divide it out
    (inflated by ``scale_margin``) so the Gram spectrum lies in ``[0, 1]``,
    estimate Chebyshev moments of the spectral density with random probes,
    and contract them with the Chebyshev coefficients of ``log``.

    A standardized matrix that is identically zero (all generations equal)
    is scored as the zero operator instead of being rescaled.
    """
    cfg = cfg or EesConfig()
    start = time.perf_counter()
    E = _check_generations(E)
    K = E.shape[1]
    power_seed, probe_seed = np.random.SeedSequence(cfg.seed).spawn(2)

    E_norm = standardize_columns(E)
    # centering leaves round-off in constant rows; without this the power
    # method would rescale that noise to unit norm
    E_norm[np.sqrt(np.mean(E_norm * E_norm, axis=1)) < DEGENERATE_STD] = 0.0
    try:
        sigma_max = power_method(E_norm, cfg.power_tol, cfg.power_max_iter, power_seed,
                                 cfg.power_block)
    except DegenerateSpectrumError:
        sigma_max = 0.0
    except ConvergenceError as exc:
        raise ScoringError(
            f"cannot scale the spectrum: {exc}; raise power_max_iter or loosen power_tol"
        ) from exc
    if sigma_max > 0:
        # the Ritz estimate is a lower bound; a spectrum even slightly above 1
        # makes T_m grow like cosh(m * acosh(x))
        E_norm /= sigma_max * (1.0 + cfg.scale_margin)

    d = dos_moments(E_norm, cfg.moments, cfg.trace_samples, probe_seed, cfg.probe)
    c = log_cheb_coefficients(cfg.moments, cfg.quad_points, cfg.lambda_floor)
    value = combine_ees(d, c, K)
    return ScoreReport(
        value=value,
        method="ees",
        elapsed_seconds=time.perf_counter() - start,
        matrix_rows=E.shape[0],
        matrix_cols=K,
        config_echo=cfg,
        details={"sigma_max": sigma_max},
    )


def score_pair(E, alpha=DEFAULT_ALPHA, cfg=None):
    """Exact and efficient scores of the same matrix, timed independently."""
    return exact_eigenscore(E, alpha), efficient_eigenscore(E, cfg)
