"""Sensitive Embedding Indices (SEIs).

An SEI is a coordinate of the penultimate-layer sentence embedding whose
value swings the most across recent training checkpoints. This module
tracks those swings, selects the top percentile and builds deterministic
dropout masks from the selection.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, check_positive_int, check_vector
from .exceptions import DimensionError, InsufficientSamplesError
from .scores import DEFAULT_ALPHA, exact_eigenscore


@dataclass
class CheckpointSeries:
    """Embeddings of one datapoint over increasing checkpoint indices."""

    datapoint_id: str
    checkpoint_indices: list
    embeddings: np.ndarray  # (n_checkpoints, n)

    def __post_init__(self):
        self.embeddings = check_matrix(self.embeddings, "embeddings")
        idx = list(self.checkpoint_indices)
        if len(idx) != self.embeddings.shape[0]:
            raise DimensionError(
                f"{len(idx)} checkpoint indices for {self.embeddings.shape[0]} embeddings"
            )
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"checkpoint indices must be strictly increasing: {idx}")
        self.checkpoint_indices = idx

    @classmethod
    def from_array(cls, embeddings, datapoint_id="0"):
        embeddings = np.asarray(embeddings)
        return cls(datapoint_id, list(range(embeddings.shape[0])), embeddings)

    @property
    def n(self):
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class DropoutMask:
    """Set of embedding indices forced to zero."""

    n: int
    zeroed: tuple = ()

    def __post_init__(self):
        zeroed = tuple(sorted({int(i) for i in self.zeroed}))
        if zeroed and (zeroed[0] < 0 or zeroed[-1] >= self.n):
            raise IndexError(f"mask indices {zeroed} out of range for n={self.n}")
        object.__setattr__(self, "zeroed", zeroed)

    @classmethod
    def empty(cls, n):
        return cls(n, ())

    def keep(self):
        """0/1 float vector of length ``n`` with zeros at the masked indices."""
        keep = np.ones(self.n)
        keep[list(self.zeroed)] = 0.0
        return keep

    def __len__(self):
        return len(self.zeroed)


@dataclass
class SensitivityProfile:
    variability: np.ndarray
    selected: np.ndarray
    k_percent: float
    window: int = None

    def mask(self):
        return DropoutMask(len(self.variability), tuple(self.selected))


def sentence_embedding(H):
    """Half the mean token activation plus half the last token's activation.

    ``H`` has one row per token (``m x n``).
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 1:
        raise InsufficientSamplesError(f"need a non-empty (tokens x dims) matrix, got {H.shape}")
    H = check_matrix(H, "H")
    return 0.5 * (H.mean(axis=0) + H[-1])


def net_change(e_t, e_prev):
    """Element-wise absolute change between two embeddings."""
    e_t = check_vector(e_t, "e_t")
    e_prev = check_vector(e_prev, "e_prev", length=e_t.shape[0])
    return np.abs(e_t - e_prev)


def _as_series_array(series):
    if isinstance(series, CheckpointSeries):
        return series.embeddings
    return check_matrix(series, "series")


def variability(series, C):
    """Per-index variability over the last ``C`` checkpoint transitions.

    ``V_i = Var(e_i) * sum |e_i^t - e_i^{t-1}|`` where both the population
    variance and the sum of absolute changes run over the last ``C + 1``
    recorded checkpoints.
    """
    C = check_positive_int(C, "C")
    X = _as_series_array(series)
    if X.shape[0] < C + 1:
        raise InsufficientSamplesError(
            f"window C={C} needs {C + 1} checkpoints, series has {X.shape[0]}"
        )
    window = X[-(C + 1):]
    total_change = np.abs(np.diff(window, axis=0)).sum(axis=0)
    return window.var(axis=0) * total_change


def average_variability(profiles):
    """Element-wise mean of per-datapoint variability vectors."""
    profiles = [np.asarray(p, dtype=np.float64) for p in profiles]
    if not profiles:
        raise InsufficientSamplesError("need at least one variability profile")
    n = profiles[0].shape
    if any(p.shape != n or p.ndim != 1 for p in profiles):
        raise DimensionError("variability profiles must be 1-D and of equal length")
    return np.mean(np.stack(profiles), axis=0)


def selection_size(n, k_percent):
    """``ceil(k_percent / 100 * n)`` computed without rounding error."""
    return math.ceil(Fraction(k_percent) * n / 100)


def select_sensitive(V, k_percent, window=None):
    """Indices of the top ``k_percent`` percent of ``V``.

    Exactly ``ceil(k_percent/100 * n)`` indices are returned, in ascending
    order. Ties at the boundary go to the lower index.
    """
    V = check_vector(V, "V")
    if not 0 < k_percent < 100:
        raise ValueError(f"k_percent must lie in (0, 100), got {k_percent}")
    count = selection_size(V.shape[0], k_percent)
    order = np.lexsort((np.arange(V.shape[0]), -V))
    selected = np.sort(order[:count])
    return SensitivityProfile(variability=V, selected=selected, k_percent=k_percent, window=window)


def apply_mask(activations, mask, axis=-1):
    """Zero the masked coordinates along ``axis``; survivors are not rescaled."""
    a = np.array(activations, dtype=np.float64, copy=True)
    if a.shape[axis] != mask.n:
        raise DimensionError(f"mask of size {mask.n} does not fit axis of length {a.shape[axis]}")
    if mask.zeroed:
        idx = [slice(None)] * a.ndim
        idx[axis] = list(mask.zeroed)
        a[tuple(idx)] = 0.0
    return a


class SensitiveIndexSelector(BaseEstimator, TransformerMixin):
    """Select SEIs from checkpoint series and drop them from activations.

    Parameters
    ----------
    k_percent : float, default=20
        Share of embedding indices to select.
    window : int, default=2
        Number of checkpoint transitions ``C`` the variability looks back over.

    Attributes
    ----------
    variability_ : ndarray of shape (n_datapoints, n)
    average_variability_ : ndarray of shape (n,)
    selected_ : ndarray of selected indices, ascending
    mask_ : DropoutMask
    """

    def __init__(self, k_percent=20.0, window=2):
        self.k_percent = k_percent
        self.window = window

    def fit(self, X, y=None):
        """``X``: a list of :class:`CheckpointSeries` or an array of shape
        ``(n_datapoints, n_checkpoints, n)``."""
        if isinstance(X, CheckpointSeries):
            X = [X]
        per_point = np.stack([variability(s, self.window) for s in X])
        self.variability_ = per_point
        self.average_variability_ = average_variability(per_point)
        profile = select_sensitive(self.average_variability_, self.k_percent, self.window)
        self.selected_ = profile.selected
        self.mask_ = profile.mask()
        self.n_features_in_ = per_point.shape[1]
        return self

    def get_support(self, indices=False):
        """Boolean keep-mask over features, or the indices that survive."""
        check_is_fitted(self, "mask_")
        keep = self.mask_.keep().astype(bool)
        return np.flatnonzero(keep) if indices else keep

    def transform(self, X):
        check_is_fitted(self, "mask_")
        X = check_matrix(X, "X")
        return apply_mask(X, self.mask_, axis=1)


@dataclass
class DropoutExperimentReport:
    """Drop Values (EigenScore before minus after masking) per input and trial."""

    sei_drop: np.ndarray  # (n_inputs,)
    random_drop: np.ndarray  # (trials, n_inputs)
    k_percent: float
    alpha: float
    seed: int
    sei_sets: list = field(default_factory=list)

    @property
    def mean_sei(self):
        return float(self.sei_drop.mean())

    @property
    def std_sei(self):
        return float(self.sei_drop.std())

    @property
    def mean_random(self):
        return float(self.random_drop.mean())

    @property
    def std_random(self):
        return float(self.random_drop.std())

    def per_input(self):
        return [
            {
                "sei_drop": float(s),
                "random_drop_mean": float(r.mean()),
                "random_drop_std": float(r.std()),
            }
            for s, r in zip(self.sei_drop, self.random_drop.T)
        ]

    def to_dict(self):
        return {
            "k_percent": self.k_percent,
            "alpha": self.alpha,
            "seed": self.seed,
            "mean_sei_drop": self.mean_sei,
            "std_sei_drop": self.std_sei,
            "mean_random_drop": self.mean_random,
            "std_random_drop": self.std_random,
            "per_input": self.per_input(),
        }


def sei_dropout_experiment(embedding_sets, series, k_percent, alpha=DEFAULT_ALPHA,
                           trials=20, seed=0, window=None):
    """Compare EigenScore drops from masking SEIs against random index sets.

    Each generation matrix in ``embedding_sets`` (``n x K``) is paired with the
    checkpoint series of the same input. Its SEIs come from that series
    (window defaults to all recorded transitions). For every trial a random
    index set of the same size is drawn for each input.
    """
    embedding_sets = [check_matrix(E, "embedding set") for E in embedding_sets]
    series = list(series)
    if len(embedding_sets) != len(series) or not series:
        raise DimensionError(
            f"{len(embedding_sets)} embedding sets for {len(series)} checkpoint series"
        )
    trials = check_positive_int(trials, "trials")
    rng = np.random.default_rng(seed)

    sei_drop = np.empty(len(series))
    random_drop = np.empty((trials, len(series)))
    sei_sets = []
    for i, (E, s) in enumerate(zip(embedding_sets, series)):
        X = _as_series_array(s)
        n = E.shape[0]
        if X.shape[1] != n:
            raise DimensionError(f"input {i}: series dimension {X.shape[1]} != embedding rows {n}")
        before = exact_eigenscore(E, alpha).value
        if k_percent == 0:
            chosen = np.array([], dtype=int)
        else:
            C = window if window is not None else X.shape[0] - 1
            chosen = select_sensitive(variability(X, C), k_percent, C).selected
        sei_sets.append(chosen)
        sei_drop[i] = before - exact_eigenscore(apply_mask(E, DropoutMask(n, chosen), axis=0), alpha).value
        for t in range(trials):
            random_set = rng.choice(n, size=len(chosen), replace=False)
            masked = apply_mask(E, DropoutMask(n, random_set), axis=0)
            random_drop[t, i] = before - exact_eigenscore(masked, alpha).value
    return DropoutExperimentReport(
        sei_drop=sei_drop,
        random_drop=random_drop,
        k_percent=k_percent,
        alpha=alpha,
        seed=seed,
        sei_sets=sei_sets,
    )
