import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialogact.corpus import UNK, Utterance, Vocabulary
from dialogact.embeddings import EmbeddingSet
from dialogact.maxent import (
    LbfgsConfig,
    MaxEntModel,
    MeParams,
    featurize,
    featurize_corpus,
    lbfgs_minimize,
    me_loss_grad,
    me_predict,
    me_train,
    train_maxent,
)
from dialogact.numerics import finite_diff_grad
from dialogact.synthetic import ORDER_PAIR, synthetic_split


def quadratic(seed, n=5):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    A = M @ M.T + n * np.eye(n)
    b = rng.normal(size=n)
    return A, b, lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b)


def toy_data(seed, n=40, d=6, k=3):
    rng = np.random.default_rng(seed)
    X = (rng.random((n, d)) < 0.5).astype(float)
    y = rng.integers(0, k, n)
    return X, y


def test_featurize_binary_occurrence():
    vocab = Vocabulary([UNK, "a", "b"])
    np.testing.assert_array_equal(featurize(["a", "a"], vocab), [0, 1, 0])
    np.testing.assert_array_equal(featurize(["zzz", "b"], vocab), [1, 0, 1])


def test_feature_length_with_embeddings():
    vocab = Vocabulary([UNK] + [f"w{i}" for i in range(999)])
    emb = EmbeddingSet(["w1"], np.ones((1, 300)))
    assert featurize(["w1"], vocab).shape == (1000,)
    assert featurize(["w1"], vocab, emb).shape == (1300,)


def test_loss_is_ln2_at_zero_params():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    loss, _ = me_loss_grad(MeParams.zeros(2, 2), X, np.array([0, 1]))
    assert loss == pytest.approx(math.log(2), abs=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    X, y = toy_data(seed)
    rng = np.random.default_rng(seed + 10)
    theta = rng.normal(size=3 * 6 + 3)

    def f(t):
        return me_loss_grad(MeParams.unflat(t, 3, 6), X, y, 1e-2)[0]

    _, g = me_loss_grad(MeParams.unflat(theta, 3, 6), X, y, 1e-2)
    np.testing.assert_allclose(g.flat(), finite_diff_grad(f, theta), atol=1e-7)


def test_duplicating_data_changes_nothing():
    X, y = toy_data(0)
    p = MeParams.unflat(np.random.default_rng(1).normal(size=21), 3, 6)
    l1, g1 = me_loss_grad(p, X, y)
    l2, g2 = me_loss_grad(p, np.vstack([X, X]), np.concatenate([y, y]))
    assert l1 == pytest.approx(l2, rel=1e-14)
    np.testing.assert_allclose(g1.flat(), g2.flat(), rtol=1e-12, atol=1e-16)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("memory", [10, 1])
def test_lbfgs_on_spd_quadratic(seed, memory):
    A, b, f = quadratic(seed)
    res = lbfgs_minimize(f, np.zeros(5), LbfgsConfig(memory=memory, tol=1e-8, max_iters=50))
    assert res.converged and res.grad_norm <= 1e-8
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-6)


def test_lbfgs_returns_immediately_at_optimum():
    A, b, f = quadratic(0)
    res = lbfgs_minimize(f, np.linalg.solve(A, b), LbfgsConfig(tol=1e-8))
    assert res.n_iter == 0 and res.converged


def test_lbfgs_trace_is_monotone():
    X, y = toy_data(3, n=80, d=10, k=4)

    def f(t):
        loss, g = me_loss_grad(MeParams.unflat(t, 4, 10), X, y)
        return loss, g.flat()

    res = lbfgs_minimize(f, np.zeros(44))
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))


def test_lbfgs_reports_line_search_failure():
    # gradient that points the wrong way: no step ever decreases f
    res = lbfgs_minimize(lambda x: (float(x @ x), -2 * x), np.ones(2))
    assert not res.converged and "line search" in res.message
    np.testing.assert_array_equal(res.x, np.ones(2))


def test_lbfgs_config_validation():
    with pytest.raises(ValueError):
        LbfgsConfig(memory=0)
    with pytest.raises(ValueError):
        LbfgsConfig(tol=0)


def test_trained_loss_beats_random_points():
    X, y = toy_data(4)
    cfg = LbfgsConfig()
    p = me_train(X, y, 3, cfg)
    best, _ = me_loss_grad(p, X, y, cfg.l2)
    assert best <= me_loss_grad(MeParams.zeros(3, 6), X, y, cfg.l2)[0]
    rng = np.random.default_rng(0)
    for _ in range(100):
        other = MeParams.unflat(rng.normal(size=21), 3, 6)
        assert best <= me_loss_grad(other, X, y, cfg.l2)[0]


def test_separable_toy_is_fit_exactly():
    X = np.array([[1, 0, 1], [1, 0, 0], [0, 1, 1], [0, 1, 0]], dtype=float)
    y = np.array([0, 0, 1, 1])
    pred, _ = me_predict(me_train(X, y, 2), X)
    np.testing.assert_array_equal(pred, y)


def test_zero_params_predict_uniform():
    _, probs = me_predict(MeParams.zeros(4, 3), np.ones((2, 3)))
    np.testing.assert_array_equal(probs, 0.25)


@settings(max_examples=50, deadline=None)
@given(st.permutations(["we", "can", "go", "now", "really", "maybe"]))
def test_predictions_ignore_token_order(perm):
    vocab = Vocabulary([UNK, "we", "can", "go", "now"])
    p = MeParams.unflat(np.random.default_rng(0).normal(size=3 * 5 + 3), 3, 5)
    base = ["we", "can", "go", "now", "really", "maybe"]
    a = me_predict(p, featurize(base, vocab))
    b = me_predict(p, featurize(list(perm), vocab))
    assert a[0] == b[0] and a[1].tobytes() == b[1].tobytes()


@pytest.fixture(scope="module")
def synthetic_maxent():
    train, test = synthetic_split(400, 100, seed=0)
    return train_maxent(train), train, test


def test_order_pair_is_at_chance(synthetic_maxent):
    model, _, test = synthetic_maxent
    pair = [u for u in test if u.label in ORDER_PAIR]
    preds = model.predict(pair)
    acc = np.mean([p == u.label for p, u in zip(preds, pair)])
    assert acc <= 0.55


def test_maxent_save_load(synthetic_maxent, tmp_path):
    model, _, test = synthetic_maxent
    model.save(tmp_path / "me.darn")
    back = MaxEntModel.load(tmp_path / "me.darn")
    assert back.predict(test) == model.predict(test)
    np.testing.assert_array_equal(back.params.W, model.params.W)


def test_maxent_with_embedding_features(tmp_path):
    utts = [Utterance("d", "x", ("a", "b")), Utterance("d", "y", ("c",)), Utterance("e", "x", ("a",))]
    emb = EmbeddingSet(["a", "c"], np.array([[1.0, 0.0], [0.0, 1.0]]))
    model = train_maxent(utts, 10, emb)
    assert model.params.W.shape == (2, model.vocab.size_v + 2)
    assert model.predict(utts, emb) == ["x", "y", "x"]
    with pytest.raises(ValueError):
        model.predict(utts)
    model.save(tmp_path / "m.darn")
    assert MaxEntModel.load(tmp_path / "m.darn").embedding_dim == 2
    assert featurize_corpus(utts, model.vocab, emb).shape == (3, model.vocab.size_v + 2)
