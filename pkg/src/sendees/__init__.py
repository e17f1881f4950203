"""Exact and efficient EigenScore, sensitive embedding indices and SenD training."""

from .estimators import EfficientEigenScore, EigenScore
from .exceptions import SendeesError
from .linalg import gram_apply, matvec, power_method, standardize_columns, symmetric_eigenvalues
from .scores import EesConfig, ScoreReport, efficient_eigenscore, exact_eigenscore, score_pair
from .sensitivity import (
    CheckpointSeries,
    DropoutMask,
    SensitiveIndexSelector,
    apply_mask,
    select_sensitive,
    sentence_embedding,
    variability,
)
from .send import SenDConfig, compare_runs, normal_loop, send_loop

__version__ = "0.1.0"

__all__ = [
    "CheckpointSeries",
    "DropoutMask",
    "EesConfig",
    "EfficientEigenScore",
    "EigenScore",
    "ScoreReport",
    "SenDConfig",
    "SendeesError",
    "SensitiveIndexSelector",
    "apply_mask",
    "compare_runs",
    "efficient_eigenscore",
    "exact_eigenscore",
    "gram_apply",
    "matvec",
    "normal_loop",
    "power_method",
    "score_pair",
    "select_sensitive",
    "send_loop",
    "sentence_embedding",
    "standardize_columns",
    "symmetric_eigenvalues",
    "variability",
]
