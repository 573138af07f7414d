"""Maximum Entropy baseline: multinomial logistic regression trained with L-BFGS."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import darn
from .corpus import LabelSet, Utterance, Vocabulary, bag_of_words, build_vocabulary
from .embeddings import EmbeddingSet, avg_sentence_embedding
from .numerics import softmax

log = logging.getLogger(__name__)

CURVATURE_EPS = 1e-10
MAX_BACKTRACKS = 50


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iters: int = 200
    tol: float = 1e-5
    armijo: float = 1e-4
    shrink: float = 0.5
    l2: float = 1e-4

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.tol <= 0 or self.armijo <= 0 or not 0 < self.shrink < 1:
            raise ValueError("tolerances must be positive and 0 < shrink < 1")


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    n_iter: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)


def _two_loop(g: np.ndarray, S: deque, Y: deque) -> np.ndarray:
    """Approximate H^{-1} g from the stored curvature pairs."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        bq = rho * (y @ q)
        q += (a - bq) * s
    return q


def lbfgs_minimize(
    f: Callable[[np.ndarray], tuple[float, np.ndarray]],
    theta0: np.ndarray,
    cfg: LbfgsConfig = LbfgsConfig(),
) -> LbfgsResult:
    """L-BFGS with Armijo backtracking.

    Pairs with ``s.y <= 1e-10 * ||s|| ||y||`` are dropped (the guard is
    scale-free so that it keeps working once steps become tiny). Stops when ``||g|| <= tol`` or after
    ``max_iters``; on line-search failure returns the best point seen.
    """
    x = np.array(theta0, dtype=np.float64)
    fx, g = f(x)
    gnorm = float(np.linalg.norm(g))
    trace = [fx]
    if gnorm <= cfg.tol:
        return LbfgsResult(x, fx, gnorm, 0, True, "initial point satisfies tolerance", trace)
    S: deque = deque(maxlen=cfg.memory)
    Y: deque = deque(maxlen=cfg.memory)
    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        d = -_two_loop(g, S, Y)
        gd = float(g @ d)
        if gd >= 0 or not np.isfinite(gd):
            S.clear()
            Y.clear()
            d = -g
            gd = -gnorm * gnorm
        step = 1.0 if S else min(1.0, 1.0 / gnorm)
        for _ in range(MAX_BACKTRACKS):
            x_new = x + step * d
            f_new, g_new = f(x_new)
            if f_new <= fx + cfg.armijo * step * gd:
                break
            # near the optimum the Armijo decrease drops below rounding; accept
            # non-increasing steps that still shrink the gradient
            if f_new <= fx and np.linalg.norm(g_new) < gnorm:
                break
            step *= cfg.shrink
        else:
            message = f"line search failed after {MAX_BACKTRACKS} backtracks"
            log.warning("L-BFGS: %s at iteration %d (|g|=%.3g)", message, it, gnorm)
            it -= 1
            break
        s, y = x_new - x, g_new - g
        if s @ y > CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x, fx, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        trace.append(fx)
        if gnorm <= cfg.tol:
            converged, message = True, "gradient norm below tolerance"
            break
    return LbfgsResult(x, fx, gnorm, it, converged, message, trace)


@dataclass
class MeParams:
    W: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, n_labels: int, n_features: int) -> "MeParams":
        return cls(np.zeros((n_labels, n_features)), np.zeros(n_labels))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b])

    @classmethod
    def unflat(cls, theta: np.ndarray, n_labels: int, n_features: int) -> "MeParams":
        k = n_labels * n_features
        return cls(theta[:k].reshape(n_labels, n_features).copy(), theta[k:].copy())


def featurize(
    tokens: Sequence[str], vocab: Vocabulary, embeddings: EmbeddingSet | None = None
) -> np.ndarray:
    """Binary bag-of-words, optionally followed by the sentence's mean embedding."""
    bow = bag_of_words(tokens, vocab)
    if embeddings is None:
        return bow
    return np.concatenate([bow, avg_sentence_embedding(tokens, embeddings)])


def featurize_corpus(
    utterances: Sequence[Utterance], vocab: Vocabulary, embeddings: EmbeddingSet | None = None
) -> np.ndarray:
    dim = vocab.size_v + (embeddings.dim if embeddings is not None else 0)
    X = np.zeros((len(utterances), dim))
    for i, u in enumerate(utterances):
        X[i] = featurize(u.tokens, vocab, embeddings)
    return X


def me_loss_grad(params: MeParams, X: np.ndarray, y: np.ndarray, l2: float = 1e-4) -> tuple[float, MeParams]:
    """Mean cross-entropy of softmax(Wx + b) plus (l2/2)||W||^2, with its gradient."""
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    z = X @ params.W.T + params.b
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(n), y]) + 0.5 * l2 * np.sum(params.W ** 2))
    dz = softmax(z)
    dz[np.arange(n), y] -= 1.0
    dz /= n
    return loss, MeParams(dz.T @ X + l2 * params.W, dz.sum(axis=0))


def me_train(X: np.ndarray, y: np.ndarray, n_labels: int, cfg: LbfgsConfig = LbfgsConfig()) -> MeParams:
    """L-BFGS from zero weights."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    D = X.shape[1]

    def f(theta):
        loss, g = me_loss_grad(MeParams.unflat(theta, n_labels, D), X, y, cfg.l2)
        return loss, g.flat()

    res = lbfgs_minimize(f, MeParams.zeros(n_labels, D).flat(), cfg)
    log.info("maxent L-BFGS: %s after %d iterations (loss %.6f)", res.message, res.n_iter, res.fun)
    return MeParams.unflat(res.x, n_labels, D)


def me_predict(params: MeParams, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax labels and probabilities; a 1-D feature vector gives scalar label."""
    probs = softmax(np.asarray(features) @ params.W.T + params.b)
    return probs.argmax(axis=-1), probs


@dataclass
class MaxEntModel:
    params: MeParams
    vocab: Vocabulary
    labels: LabelSet
    embedding_dim: int = 0

    def features(self, utterances: Sequence[Utterance], embeddings: EmbeddingSet | None = None) -> np.ndarray:
        if self.embedding_dim and (embeddings is None or embeddings.dim != self.embedding_dim):
            raise ValueError(f"model expects {self.embedding_dim}-d embeddings for its features")
        return featurize_corpus(utterances, self.vocab, embeddings if self.embedding_dim else None)

    def predict(self, utterances: Sequence[Utterance], embeddings: EmbeddingSet | None = None) -> list[str]:
        ids, _ = me_predict(self.params, self.features(utterances, embeddings))
        return [self.labels.labels[i] for i in ids]

    def save(self, path: str | Path) -> None:
        tensors = {
            "meta.embedding_dim": np.array(self.embedding_dim, dtype=np.float32),
            "me.W": self.params.W,
            "me.b": self.params.b,
        }
        darn.write_container(path, "maxent", self.vocab.entries, list(self.labels.labels), tensors)

    @classmethod
    def load(cls, path: str | Path) -> "MaxEntModel":
        kind, words, labels, tensors = darn.read_container(path)
        if kind != "maxent":
            raise darn.ModelFormatError(f"{path}: model type is {kind!r}, expected 'maxent'")
        vocab, labelset = Vocabulary(words), LabelSet(tuple(labels))
        e = int(darn.expect_shape(tensors, "meta.embedding_dim", ()))
        W = darn.expect_shape(tensors, "me.W", (len(labelset), vocab.size_v + e))
        b = darn.expect_shape(tensors, "me.b", (len(labelset),))
        return cls(MeParams(W.astype(np.float64), b.astype(np.float64)), vocab, labelset, e)


def train_maxent(
    corpus: Sequence[Utterance],
    vocab_size: int = 1000,
    embeddings: EmbeddingSet | None = None,
    cfg: LbfgsConfig = LbfgsConfig(),
    vocab: Vocabulary | None = None,
    labels: LabelSet | None = None,
) -> MaxEntModel:
    vocab = vocab or build_vocabulary(corpus, vocab_size)
    labels = labels or LabelSet.from_utterances(corpus)
    X = featurize_corpus(corpus, vocab, embeddings)
    index = {lab: i for i, lab in enumerate(labels.labels)}
    y = np.array([index.get(u.label, -1) for u in corpus])
    keep = y >= 0
    params = me_train(X[keep], y[keep], len(labels), cfg)
    # stored models are single precision; keep the in-memory model identical to a reloaded one
    params = MeParams(params.W.astype(np.float32).astype(np.float64), params.b.astype(np.float32).astype(np.float64))
    return MaxEntModel(params, vocab, labels, embeddings.dim if embeddings is not None else 0)
