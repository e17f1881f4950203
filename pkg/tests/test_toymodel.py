import numpy as np
import pytest

from sendees import toymodel
from sendees.exceptions import DivergenceError
from sendees.toymodel import (
    ToyModelConfig,
    contexts_for,
    evaluate_loss,
    generate_corpus,
    init_state,
    loss_and_grads,
    next_token_examples,
    sgd_epoch,
)

TINY = ToyModelConfig(vocab=7, context=3, embed_dim=5, hidden_layers=2, hidden_width=4,
                      token_dim=2, batch_size=4)


def finite_difference(state, X, y, keep, name, idx, h=1e-6):
    p = state.params[name]
    old = p[idx]
    p[idx] = old + h
    up = evaluate_loss(state, X, y, keep)
    p[idx] = old - h
    down = evaluate_loss(state, X, y, keep)
    p[idx] = old
    return (up - down) / (2 * h)


@pytest.fixture
def batch():
    rng = np.random.default_rng(0)
    X = rng.integers(0, TINY.vocab, size=(6, TINY.context))
    y = rng.integers(1, TINY.vocab, size=6)
    return X, y


@pytest.mark.parametrize("masked", [False, True])
def test_gradients_match_finite_differences(batch, masked):
    X, y = batch
    state = init_state(TINY)
    keep = np.array([1.0, 0.0, 1.0, 1.0, 0.0]) if masked else None
    _, grads = loss_and_grads(state, X, y, keep)
    rng = np.random.default_rng(1)
    for name, g in grads.items():
        for _ in range(3):
            idx = tuple(rng.integers(0, s) for s in g.shape)
            assert g[idx] == pytest.approx(finite_difference(state, X, y, keep, name, idx),
                                           abs=1e-7, rel=1e-5)


def test_masked_units_get_no_gradient(batch):
    X, y = batch
    keep = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    _, grads = loss_and_grads(init_state(TINY), X, y, keep)
    assert np.all(grads["Wo"][[1, 4]] == 0.0)
    assert np.all(grads["Wp"][:, [1, 4]] == 0.0)
    assert np.all(grads["bp"][[1, 4]] == 0.0)


def test_contexts_left_padded():
    ctx = contexts_for([4, 5, 6], 3)
    np.testing.assert_array_equal(ctx, [[0, 0, 4], [0, 4, 5], [4, 5, 6]])


def test_next_token_examples():
    X, y = next_token_examples([[1, 2, 3], [4]], 2)
    np.testing.assert_array_equal(X, [[0, 1], [1, 2]])
    np.testing.assert_array_equal(y, [2, 3])


def test_init_is_seeded():
    a, b = init_state(TINY), init_state(TINY)
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()


def test_copy_is_deep():
    s = init_state(TINY)
    c = s.copy()
    c.params["Wo"][0, 0] += 1.0
    first = c.rng.random()
    assert s.params["Wo"][0, 0] != c.params["Wo"][0, 0]
    assert s.rng.random() == first


def test_divergence_is_reported():
    X, y = next_token_examples(generate_corpus(20, 10, vocab=7, seed=1), TINY.context)
    state = init_state(TINY)
    state.params["Wo"][0, 0] = np.inf
    with pytest.raises(DivergenceError, match="lr="), np.errstate(all="ignore"):
        sgd_epoch(state, X, y)


def test_overflowing_update_is_reported():
    # saturated tanh keeps the loss finite, so the parameter check must fire
    cfg = ToyModelConfig(vocab=7, context=3, embed_dim=5, hidden_width=4, token_dim=2,
                         learning_rate=1e308)
    X, y = next_token_examples(generate_corpus(20, 10, vocab=7, seed=1), cfg.context)
    state = init_state(cfg)
    with pytest.raises(DivergenceError, match="non-finite"), np.errstate(all="ignore"):
        for _ in range(5):
            sgd_epoch(state, X, y)


class TestCorpus:
    def test_tokens_in_range_and_no_padding(self):
        corpus = generate_corpus(50, 12, vocab=9, seed=3)
        assert len(corpus) == 50 and all(len(s) == 12 for s in corpus)
        flat = np.concatenate(corpus)
        assert flat.min() >= 1 and flat.max() < 9

    def test_noise_free_follows_grammar(self):
        corpus = generate_corpus(5, 10, vocab=11, n_grammars=1, noise=0.0, seed=4)
        # one affine map drives every transition
        pairs = {(a, b) for s in corpus for a, b in zip(s, s[1:])}
        successors = {}
        for a, b in pairs:
            successors.setdefault(a, set()).add(b)
        assert all(len(v) == 1 for v in successors.values())

    def test_seeded(self):
        a = generate_corpus(seed=7)
        b = generate_corpus(seed=7)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_config_validation():
    with pytest.raises(ValueError):
        ToyModelConfig(vocab=1)
    with pytest.raises(ValueError):
        ToyModelConfig(learning_rate=-1.0)
    assert toymodel.PAD == 0
