"""Sensitivity Dropout (SenD) training protocol on the toy model.

Training alternates windows of ``T`` checkpoints (one checkpoint = one pass
over the training split). Within a window the current dropout mask zeroes
a fixed set of penultimate-layer indices. After the window, the indices
whose tracking-set embeddings varied the most are selected and become the
mask of the next window. The loop stops once both the training loss and
the EES of sampled generations are at or below their thresholds, or when
``max_checkpoints`` is reached.
"""

import time
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
import math

import numpy as np

from . import toymodel
from .exceptions import ConfigError, InsufficientSamplesError
from .scores import DEFAULT_ALPHA, EesConfig, efficient_eigenscore, exact_eigenscore
from .sensitivity import (
    DropoutMask,
    average_variability,
    sei_dropout_experiment,
    select_sensitive,
    sentence_embedding,
    variability,
)


@dataclass(frozen=True)
class SenDConfig:
    epsilon: float = 0.05
    delta: float = -1.0
    T: int = 3
    k_percent: float = 20.0
    alpha_split: float = 95.0
    max_checkpoints: int = 30
    ees: EesConfig = field(default_factory=EesConfig)
    gen_temperature: float = 0.5
    gen_count: int = 10
    gen_length: int = 8
    prompt_length: int = 4
    alpha: float = DEFAULT_ALPHA
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.T < 2:
            raise ConfigError(f"T must be >= 2 so a window has a transition, got {self.T}")
        if not 0 <= self.k_percent < 100:
            raise ConfigError(f"k_percent must lie in [0, 100), got {self.k_percent}")
        if not 0 < self.alpha_split < 100:
            raise ConfigError(f"alpha_split must lie in (0, 100), got {self.alpha_split}")
        if self.max_checkpoints < 1:
            raise ConfigError("max_checkpoints must be >= 1")
        if self.gen_count < 2:
            raise ConfigError(f"gen_count must be >= 2, got {self.gen_count}")
        if not self.gen_temperature > 0:
            raise ConfigError("gen_temperature must be positive")
        if self.gen_length < 1 or self.prompt_length < 1:
            raise ConfigError("gen_length and prompt_length must be positive")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


@dataclass
class CheckpointRecord:
    checkpoint_index: int
    train_loss: float
    ees: float
    exact_score: float
    active_mask: DropoutMask
    wall_seconds: float
    generations: list = field(default_factory=list, repr=False)
    representations: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {
            "checkpoint": self.checkpoint_index,
            "train_loss": self.train_loss,
            "ees": self.ees,
            "exact_score": self.exact_score,
            "active_mask": list(self.active_mask.zeroed),
            "wall_seconds": self.wall_seconds,
        }


@dataclass
class RunLog:
    mode: str
    seed: int
    records: list = field(default_factory=list)
    converged: bool = False
    hit_max_checkpoints: bool = False
    total_wall_seconds: float = 0.0
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def losses(self):
        return np.array([r.train_loss for r in self.records])

    @property
    def ees(self):
        return np.array([r.ees for r in self.records])

    @property
    def exact_scores(self):
        return np.array([r.exact_score for r in self.records])

    def summary(self):
        return {
            "mode": self.mode,
            "seed": self.seed,
            "n_checkpoints": len(self.records),
            "converged": self.converged,
            "hit_max_checkpoints": self.hit_max_checkpoints,
            "total_wall_seconds": self.total_wall_seconds,
            "final_loss": float(self.losses[-1]) if self.records else None,
            "final_ees": float(self.ees[-1]) if self.records else None,
            "config": self.config,
        }


def split_dataset(corpus, alpha_split, seed):
    """Seeded shuffle, then ``floor(alpha_split% * N)`` training items and the rest for tracking."""
    corpus = list(corpus)
    if not corpus:
        raise InsufficientSamplesError("cannot split an empty corpus")
    if not 0 < alpha_split < 100:
        raise ValueError(f"alpha_split must lie in (0, 100), got {alpha_split}")
    order = np.random.default_rng(seed).permutation(len(corpus))
    n_train = math.floor(Fraction(alpha_split) * len(corpus) / 100)
    return [corpus[i] for i in order[:n_train]], [corpus[i] for i in order[n_train:]]


def _keep(mask, n):
    if mask is None or len(mask) == 0:
        return None
    if mask.n != n:
        raise ValueError(f"mask of size {mask.n} for a penultimate layer of width {n}")
    return mask.keep()


def train_checkpoint(state, Y_t, mask=None):
    """One pass of mini-batch SGD over ``Y_t`` with ``mask`` on the penultimate layer.

    ``Y_t`` is a list of token sequences or a precomputed ``(X, y)`` pair.
    Returns ``(new_state, mean_loss)``; ``state`` itself is left untouched.
    """
    if isinstance(Y_t, tuple):
        X, y = Y_t
    else:
        X, y = toymodel.next_token_examples(Y_t, state.config.context)
    new_state = state.copy()
    loss = toymodel.sgd_epoch(new_state, X, y, _keep(mask, state.config.embed_dim))
    return new_state, loss


def record_representations(state, Y_s, mask=None):
    """Sentence embedding of each tracking sequence from penultimate activations."""
    if len(Y_s) == 0:
        raise InsufficientSamplesError("tracking set is empty")
    keep = _keep(mask, state.config.embed_dim)
    out = []
    for seq in Y_s:
        H = toymodel.penultimate(state, toymodel.contexts_for(seq, state.config.context), keep)
        out.append(sentence_embedding(H))
    return out


def generate_k_outputs(state, prompt, K, temperature, seed, mask=None, length=8):
    """Sample ``K`` continuations of ``prompt`` and embed each one.

    Each step samples from ``softmax(logits / temperature)``. The embedding of
    a continuation reduces the penultimate activations at its generated
    tokens with :func:`sentence_embedding`.

    Returns
    -------
    ndarray of shape (embed_dim, K)
    """
    cfg = state.config
    prompt = np.asarray(prompt, dtype=np.int64)
    if prompt.ndim != 1 or prompt.size == 0:
        raise ValueError("prompt must be a non-empty token sequence")
    if prompt.min() < 0 or prompt.max() >= cfg.vocab:
        raise ValueError(f"prompt tokens must lie in [0, {cfg.vocab})")
    if K < 2:
        raise ValueError(f"need at least 2 generations, got {K}")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    keep = _keep(mask, cfg.embed_dim)
    rng = np.random.default_rng(seed)

    seqs = np.tile(prompt, (K, 1))
    pad = np.full((K, cfg.context), toymodel.PAD, dtype=np.int64)
    for _ in range(length):
        window = np.concatenate([pad, seqs], axis=1)[:, -cfg.context:]
        logits, _ = toymodel.forward(state, window, keep)
        z = logits / temperature
        z -= z.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        u = rng.random(K)
        cdf = np.cumsum(probs, axis=1)
        nxt = np.minimum((cdf <= u[:, None]).sum(axis=1), cfg.vocab - 1)
        seqs = np.concatenate([seqs, nxt[:, None]], axis=1)

    cols = []
    for k in range(K):
        windows = toymodel.contexts_for(seqs[k], cfg.context)[len(prompt):]
        cols.append(sentence_embedding(toymodel.penultimate(state, windows, keep)))
    return np.stack(cols, axis=1)


def generation_seed(run_seed, prompt_index):
    """Sampling stream of one tracking prompt, fixed across checkpoints."""
    return np.random.SeedSequence([run_seed, prompt_index])


def evaluate_checkpoint(state, prompts, mask, cfg):
    """Average EES and exact EigenScore over the tracking prompts."""
    gens, ees, exact = [], [], []
    for j, prompt in enumerate(prompts):
        E = generate_k_outputs(state, prompt, cfg.gen_count, cfg.gen_temperature,
                               generation_seed(cfg.seed, j), mask, cfg.gen_length)
        gens.append(E)
        ees.append(efficient_eigenscore(E, cfg.ees).value)
        exact.append(exact_eigenscore(E, cfg.alpha).value)
    return float(np.mean(ees)), float(np.mean(exact)), gens


def select_from_window(representations, k_percent):
    """SEI mask from a window of recorded representations.

    ``representations`` has shape ``(T, n_tracking, n)``. Per-datapoint
    variability spans all ``T - 1`` transitions, then is averaged over the
    tracking set.
    """
    R = np.asarray(representations)
    n = R.shape[2]
    if k_percent == 0:
        return DropoutMask.empty(n)
    C = R.shape[0] - 1
    V_avg = average_variability([variability(R[:, i, :], C) for i in range(R.shape[1])])
    return select_sensitive(V_avg, k_percent, C).mask()


def _run(cfg, model_cfg, corpus, mode):
    sensitivity = mode == "send"
    start = time.perf_counter()
    Y_t, Y_s = split_dataset(corpus, cfg.alpha_split, cfg.seed)
    if not Y_t or not Y_s:
        raise InsufficientSamplesError(
            f"split left {len(Y_t)} training and {len(Y_s)} tracking sequences"
        )
    state = toymodel.init_state(model_cfg, shuffle_seed=cfg.seed)
    train_data = toymodel.next_token_examples(Y_t, model_cfg.context)
    prompts = [np.asarray(seq[:cfg.prompt_length]) for seq in Y_s]
    mask = DropoutMask.empty(model_cfg.embed_dim)

    log = RunLog(mode=mode, seed=cfg.seed,
                 config={"send": cfg.to_dict(), "model": model_cfg.to_dict()})
    while True:
        window = []
        for _ in range(cfg.T):
            if len(log.records) >= cfg.max_checkpoints:
                break
            t0 = time.perf_counter()
            state, loss = train_checkpoint(state, train_data, mask)
            reps = None
            if sensitivity:
                reps = np.stack(record_representations(state, Y_s, mask))
                window.append(reps)
            ees, exact, gens = evaluate_checkpoint(state, prompts, mask, cfg)
            log.records.append(CheckpointRecord(
                checkpoint_index=len(log.records),
                train_loss=loss,
                ees=ees,
                exact_score=exact,
                active_mask=mask,
                wall_seconds=time.perf_counter() - t0,
                generations=gens,
                representations=reps,
            ))
        if sensitivity and len(window) >= 2:
            t0 = time.perf_counter()
            mask = select_from_window(window, cfg.k_percent)
            log.records[-1].wall_seconds += time.perf_counter() - t0
        last = log.records[-1]
        if last.train_loss <= cfg.epsilon and last.ees <= cfg.delta:
            log.converged = True
            break
        if len(log.records) >= cfg.max_checkpoints:
            log.hit_max_checkpoints = True
            break
    log.total_wall_seconds = time.perf_counter() - start
    return log


def send_loop(cfg, model_cfg, corpus):
    """Train with Sensitivity Dropout. See the module docstring."""
    return _run(cfg, model_cfg, corpus, "send")


def normal_loop(cfg, model_cfg, corpus):
    """Baseline arm: same schedule and logging, never any dropout."""
    return _run(cfg, model_cfg, corpus, "normal")


def compare_runs(send, normal):
    """Side-by-side statistics of a SenD run and a baseline run.

    Both logs are truncated to the shorter one.
    """
    n = min(len(send), len(normal))
    if n == 0:
        raise InsufficientSamplesError("cannot compare empty run logs")

    def arm(log):
        ees = log.ees[:n]
        return {
            "mean_ees": float(ees.mean()),
            "ees_variance": float(ees.var()),
            "final_ees": float(ees[-1]),
            "final_loss": float(log.losses[n - 1]),
            "total_wall_seconds": log.total_wall_seconds,
        }

    s, b = arm(send), arm(normal)
    overhead = 0.0
    if normal.total_wall_seconds > 0 and send is not normal:
        overhead = 100.0 * (send.total_wall_seconds / normal.total_wall_seconds - 1.0)
    return {
        "checkpoints": n,
        "send": s,
        "normal": b,
        "ees_variance_reduction": b["ees_variance"] - s["ees_variance"],
        "final_ees_difference": s["final_ees"] - b["final_ees"],
        "max_abs_loss_difference": float(np.max(np.abs(send.losses[:n] - normal.losses[:n]))),
        "max_abs_ees_difference": float(np.max(np.abs(send.ees[:n] - normal.ees[:n]))),
        "overhead_percent": overhead,
    }


def sei_dropout_study(cfg, model_cfg, corpus, warmup=5, recorded=10, k_percent=10.0,
                      trials=20):
    """SEI-vs-random dropout on a normally trained toy model.

    The model trains without dropout for ``warmup + recorded`` checkpoints.
    Over the last ``recorded`` of them the sentence embedding of every
    tracking prompt is logged. At the final checkpoint ``gen_count``
    continuations are sampled per prompt, and each prompt's generation
    matrix is paired with its own embedding series (window spanning all
    recorded transitions) in :func:`sei_dropout_experiment`.
    """
    if recorded < 2:
        raise ValueError(f"need at least 2 recorded checkpoints, got {recorded}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    Y_t, Y_s = split_dataset(corpus, cfg.alpha_split, cfg.seed)
    prompts = [np.asarray(seq[:cfg.prompt_length]) for seq in Y_s]
    state = toymodel.init_state(model_cfg, shuffle_seed=cfg.seed)
    train_data = toymodel.next_token_examples(Y_t, model_cfg.context)
    history = []
    for c in range(warmup + recorded):
        state, _ = train_checkpoint(state, train_data)
        if c >= warmup:
            history.append(np.stack(record_representations(state, prompts)))
    R = np.stack(history)
    gens = [
        generate_k_outputs(state, p, cfg.gen_count, cfg.gen_temperature,
                           generation_seed(cfg.seed, j), None, cfg.gen_length)
        for j, p in enumerate(prompts)
    ]
    series = [R[:, j, :] for j in range(len(prompts))]
    return sei_dropout_experiment(gens, series, k_percent, alpha=cfg.alpha,
                                  trials=trials, seed=cfg.seed)
