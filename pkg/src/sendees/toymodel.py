"""A tiny feed-forward next-token model and synthetic corpora for it.

The model reads the last ``context`` tokens, embeds and concatenates them,
runs them through ``hidden_layers`` tanh layers, then a tanh penultimate
layer of width ``embed_dim`` and finally a linear layer to vocabulary logits.
Training is plain mini-batch SGD on next-token cross-entropy, written out
by hand so every step is reproducible bit for bit on a given machine.

Token ``0`` is reserved for left padding.
"""

import copy
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DivergenceError

PAD = 0


@dataclass(frozen=True)
class ToyModelConfig:
    vocab: int = 32
    context: int = 16
    embed_dim: int = 64
    hidden_layers: int = 2
    hidden_width: int = 64
    token_dim: int = 8
    learning_rate: float = 0.1
    batch_size: int = 32
    init_seed: int = 0

    def __post_init__(self):
        for name in ("vocab", "context", "embed_dim", "hidden_layers", "hidden_width",
                     "token_dim", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.vocab < 2:
            raise ValueError("vocab must hold the padding token and at least one real token")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")

    def to_dict(self):
        return asdict(self)


@dataclass
class ModelState:
    """Parameters plus the mini-batch shuffling stream."""

    config: ToyModelConfig
    params: dict
    rng: np.random.Generator

    def copy(self):
        return ModelState(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            copy.deepcopy(self.rng),
        )


def init_state(config, shuffle_seed=None):
    """Fresh model with weights drawn from ``config.init_seed``."""
    rng = np.random.default_rng(config.init_seed)

    def dense(fan_in, fan_out):
        return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in), np.zeros(fan_out)

    params = {"tok": rng.standard_normal((config.vocab, config.token_dim)) * 0.5}
    width = config.context * config.token_dim
    for i in range(config.hidden_layers):
        params[f"W{i}"], params[f"b{i}"] = dense(width, config.hidden_width)
        width = config.hidden_width
    params["Wp"], params["bp"] = dense(width, config.embed_dim)
    params["Wo"], params["bo"] = dense(config.embed_dim, config.vocab)
    if shuffle_seed is None:
        shuffle_seed = config.init_seed
    return ModelState(config, params, np.random.default_rng(shuffle_seed))


def contexts_for(sequence, context):
    """Left-padded context windows ending at every token of ``sequence``.

    Row ``i`` holds the ``context`` tokens up to and including token ``i``.
    """
    seq = np.asarray(sequence, dtype=np.int64)
    padded = np.concatenate([np.full(context - 1, PAD, dtype=np.int64), seq])
    idx = np.arange(len(seq))[:, None] + np.arange(context)[None, :]
    return padded[idx]


def next_token_examples(sequences, context):
    """Stack (context window, next token) pairs from every sequence."""
    xs, ys = [], []
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        if len(seq) < 2:
            continue
        xs.append(contexts_for(seq[:-1], context))
        ys.append(seq[1:])
    if not xs:
        return np.empty((0, context), dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(xs), np.concatenate(ys)


def forward(state, X, keep=None):
    """Run the model on context windows ``X`` (``B x context``).

    Returns ``(logits, cache)``; ``cache["pen"]`` is the (masked)
    penultimate activation.
    """
    p = state.params
    cfg = state.config
    a = p["tok"][X].reshape(X.shape[0], -1)
    hidden = [a]
    for i in range(cfg.hidden_layers):
        a = np.tanh(a @ p[f"W{i}"] + p[f"b{i}"])
        hidden.append(a)
    pen_raw = np.tanh(a @ p["Wp"] + p["bp"])
    pen = pen_raw if keep is None else pen_raw * keep
    logits = pen @ p["Wo"] + p["bo"]
    return logits, {"hidden": hidden, "pen_raw": pen_raw, "pen": pen}


def penultimate(state, X, keep=None):
    return forward(state, X, keep)[1]["pen"]


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grads(state, X, y, keep=None):
    """Mean cross-entropy on a batch and its parameter gradients."""
    p = state.params
    cfg = state.config
    B = X.shape[0]
    logits, cache = forward(state, X, keep)
    logp = _log_softmax(logits)
    loss = -logp[np.arange(B), y].mean()

    g = {}
    dlogits = np.exp(logp)
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    g["Wo"] = cache["pen"].T @ dlogits
    g["bo"] = dlogits.sum(axis=0)
    dpen = dlogits @ p["Wo"].T
    if keep is not None:
        dpen = dpen * keep
    dz = dpen * (1.0 - cache["pen_raw"] ** 2)
    prev = cache["hidden"][-1]
    g["Wp"] = prev.T @ dz
    g["bp"] = dz.sum(axis=0)
    da = dz @ p["Wp"].T
    for i in reversed(range(cfg.hidden_layers)):
        h = cache["hidden"][i + 1]
        dz = da * (1.0 - h ** 2)
        g[f"W{i}"] = cache["hidden"][i].T @ dz
        g[f"b{i}"] = dz.sum(axis=0)
        da = dz @ p[f"W{i}"].T
    dtok = np.zeros_like(p["tok"])
    np.add.at(dtok, X, da.reshape(B, cfg.context, cfg.token_dim))
    g["tok"] = dtok
    return float(loss), g


def evaluate_loss(state, X, y, keep=None):
    if len(y) == 0:
        return 0.0
    logits, _ = forward(state, X, keep)
    return float(-_log_softmax(logits)[np.arange(len(y)), y].mean())


def sgd_epoch(state, X, y, keep=None):
    """One shuffled pass of mini-batch SGD. Mutates ``state``; returns mean loss."""
    cfg = state.config
    order = state.rng.permutation(len(y))
    total = 0.0
    for start in range(0, len(order), cfg.batch_size):
        batch = order[start:start + cfg.batch_size]
        loss, grads = loss_and_grads(state, X[batch], y[batch], keep)
        if not np.isfinite(loss):
            raise DivergenceError(
                f"non-finite training loss at batch offset {start} (lr={cfg.learning_rate})"
            )
        total += loss * len(batch)
        for name, grad in grads.items():
            with np.errstate(over="ignore", invalid="ignore"):
                state.params[name] -= cfg.learning_rate * grad
            if not np.all(np.isfinite(state.params[name])):
                raise DivergenceError(
                    f"non-finite parameter {name!r} after batch offset {start} "
                    f"(lr={cfg.learning_rate})"
                )
    return total / max(len(order), 1)


def generate_corpus(n_sequences=200, length=24, vocab=32, n_grammars=4, noise=0.1, seed=0):
    """Token sequences from a mixture of deterministic affine grammars.

    Grammar ``g`` maps token ``t`` to ``(a_g * (t - 1) + b_g) mod (vocab - 1) + 1``.
    Each emitted token is independently replaced by a uniform random token
    with probability ``noise``; the underlying grammar state is unaffected.
    """
    rng = np.random.default_rng(seed)
    span = vocab - 1
    multipliers = rng.choice([a for a in range(1, span) if np.gcd(a, span) == 1],
                             size=n_grammars)
    offsets = rng.integers(1, span, size=n_grammars)
    corpus = []
    for _ in range(n_sequences):
        g = rng.integers(n_grammars)
        state = int(rng.integers(span))
        clean = np.empty(length, dtype=np.int64)
        for t in range(length):
            clean[t] = state + 1
            state = (int(multipliers[g]) * state + int(offsets[g])) % span
        flips = rng.random(length) < noise
        clean[flips] = rng.integers(1, vocab, size=int(flips.sum()))
        corpus.append(clean)
    return corpus
