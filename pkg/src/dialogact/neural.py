"""LSTM dialogue-act classifier with hand-written backpropagation and Adam.

Pipeline per sentence: embedding look-up -> masked LSTM -> (inverted) dropout on
the final hidden state -> concatenation with the previous sentence's
bag-of-words -> tanh hidden layer -> softmax.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import darn
from .corpus import (
    DEFAULT_MAX_LEN,
    PADDING_INDEX,
    EncodedCorpus,
    EncodedSentence,
    LabelSet,
    Utterance,
    Vocabulary,
    build_vocabulary,
    encode_corpus,
)
from .embeddings import EmbeddingMatrix, EmbeddingSet, build_embedding_matrix
from .numerics import batch_cross_entropy, sigmoid, softmax

log = logging.getLogger(__name__)

GATES = ("i", "f", "c", "o")
WEIGHT_SCALE = 0.05
FORGET_BIAS = 1.0
EVAL_CHUNK = 256
INIT_MODES = ("random", "pretrained", "oracle")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class LstmParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_c: np.ndarray
    U_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gate blocks stacked in i, f, c, o order: (4h, e), (4h, h), (4h,)."""
        W = np.concatenate([self.W_i, self.W_f, self.W_c, self.W_o])
        U = np.concatenate([self.U_i, self.U_f, self.U_c, self.U_o])
        b = np.concatenate([self.b_i, self.b_f, self.b_c, self.b_o])
        return W, U, b

    @classmethod
    def from_stacked(cls, W, U, b) -> "LstmParams":
        Ws, Us, bs = np.split(W, 4), np.split(U, 4), np.split(b, 4)
        kw = {}
        for g, w, u, bb in zip(GATES, Ws, Us, bs):
            kw[f"W_{g}"], kw[f"U_{g}"], kw[f"b_{g}"] = w, u, bb
        return cls(**kw)

    @property
    def hidden(self) -> int:
        return self.b_i.shape[0]


@dataclass
class ModelParams:
    embedding: np.ndarray
    lstm: LstmParams
    W_1: np.ndarray
    b_1: np.ndarray
    W_2: np.ndarray
    b_2: np.ndarray

    def named(self) -> dict[str, np.ndarray]:
        """Name -> array references (mutating the arrays mutates the model)."""
        out = {"embedding": self.embedding}
        for f in fields(LstmParams):
            out[f"lstm.{f.name}"] = getattr(self.lstm, f.name)
        out.update({"mlp.W_1": self.W_1, "mlp.b_1": self.b_1, "mlp.W_2": self.W_2, "mlp.b_2": self.b_2})
        return out

    @classmethod
    def from_named(cls, d: dict[str, np.ndarray]) -> "ModelParams":
        lstm = LstmParams(**{f.name: d[f"lstm.{f.name}"] for f in fields(LstmParams)})
        return cls(d["embedding"], lstm, d["mlp.W_1"], d["mlp.b_1"], d["mlp.W_2"], d["mlp.b_2"])

    def astype(self, dtype) -> "ModelParams":
        return ModelParams.from_named({k: v.astype(dtype, copy=True) for k, v in self.named().items()})

    def copy(self) -> "ModelParams":
        return self.astype(self.dtype)

    @property
    def dtype(self):
        return self.embedding.dtype

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0] - 1

    @property
    def n_labels(self) -> int:
        return self.b_2.shape[0]

    def check_shapes(self) -> None:
        V1, e = self.embedding.shape
        h = self.lstm.hidden
        for g in GATES:
            _expect(getattr(self.lstm, f"W_{g}"), (h, e), f"W_{g}")
            _expect(getattr(self.lstm, f"U_{g}"), (h, h), f"U_{g}")
            _expect(getattr(self.lstm, f"b_{g}"), (h,), f"b_{g}")
        u = self.b_1.shape[0]
        _expect(self.W_1, (u, h + V1 - 1), "W_1")
        _expect(self.W_2, (self.n_labels, u), "W_2")


def _expect(a: np.ndarray, shape: tuple, name: str) -> None:
    if a.shape != shape:
        raise ValueError(f"{name} has shape {a.shape}, expected {shape}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    dropout_rate: float = 0.5
    seed: int = 0
    freeze_embeddings: bool = False
    init_mode: str = "random"
    embedding_dim: int = 300
    lstm_hidden: int = 50
    mlp_hidden: int = 200
    max_len: int = DEFAULT_MAX_LEN
    vocab_size: int = 1000
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.max_len < 6:
            raise ValueError("max_len must be >= 6")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        for name in ("embedding_dim", "lstm_hidden", "mlp_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def init_params(
    embedding: np.ndarray, n_labels: int, lstm_hidden: int, mlp_hidden: int, seed: int, dtype=np.float32
) -> ModelParams:
    """Uniform(-0.05, 0.05) weights, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng([seed, 1])
    V1, e = embedding.shape
    h, u = lstm_hidden, mlp_hidden

    def uni(*shape):
        return rng.uniform(-WEIGHT_SCALE, WEIGHT_SCALE, size=shape).astype(dtype)

    kw = {}
    for g in GATES:
        kw[f"W_{g}"] = uni(h, e)
        kw[f"U_{g}"] = uni(h, h)
        kw[f"b_{g}"] = np.full(h, FORGET_BIAS if g == "f" else 0.0, dtype=dtype)
    emb = np.array(embedding, dtype=dtype, copy=True)
    emb[PADDING_INDEX] = 0.0
    return ModelParams(
        embedding=emb,
        lstm=LstmParams(**kw),
        W_1=uni(u, h + V1 - 1),
        b_1=np.zeros(u, dtype=dtype),
        W_2=uni(n_labels, u),
        b_2=np.zeros(n_labels, dtype=dtype),
    )


def lstm_step(x, h_prev, c_prev, p: LstmParams):
    """One LSTM transition; works on single vectors or on (B, ·) batches."""
    W, U, b = p.stacked()
    if x.shape[-1] != W.shape[1] or h_prev.shape[-1] != U.shape[1]:
        raise ValueError("lstm_step: input/state shapes do not match the parameters")
    h, c, _ = _cell(x @ W.T + h_prev @ U.T + b, c_prev)
    return h, c


def _cell(a, c_prev):
    n = a.shape[-1] // 4
    i = sigmoid(a[..., :n])
    f = sigmoid(a[..., n : 2 * n])
    g = np.tanh(a[..., 2 * n : 3 * n])
    o = sigmoid(a[..., 3 * n :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return o * tc, c, (i, f, g, o, tc)


def _as_batch(ex):
    if isinstance(ex, EncodedSentence):
        return (ex.token_ids[None, :], ex.mask[None, :], ex.prev_bow[None, :]), True
    if isinstance(ex, EncodedCorpus):
        return (ex.token_ids, ex.mask, ex.prev_bow), False
    ids, mask, bow = ex
    return (np.atleast_2d(ids), np.atleast_2d(mask), np.atleast_2d(bow)), np.ndim(ids) == 1


def forward(params: ModelParams, ex, train_mode: bool = False, rng=None, dropout_rate: float = 0.5):
    """Class probabilities and a cache for :func:`backward`.

    ``ex`` is an EncodedSentence (probabilities of shape (K,)), an EncodedCorpus
    or an ``(ids, mask, prev_bow)`` triple. Padded steps are skipped: the state
    is carried through unchanged, so their token ids never matter.
    """
    (ids, mask, bow), single = _as_batch(ex)
    dt = params.dtype
    B, L = ids.shape
    h_dim = params.lstm.hidden
    if bow.shape[1] != params.vocab_size:
        raise ValueError(f"prev_bow has length {bow.shape[1]}, model vocabulary is {params.vocab_size}")
    W, U, b = params.lstm.stacked()
    X = params.embedding[ids]
    h = np.zeros((B, h_dim), dtype=dt)
    c = np.zeros((B, h_dim), dtype=dt)
    steps = []
    for t in range(L):
        m = mask[:, t]
        if not m.any():
            steps.append(None)
            continue
        x = X[:, t]
        h_new, c_new, gates = _cell(x @ W.T + h @ U.T + b, c)
        steps.append((m, x, h, c, gates))
        mc = m[:, None]
        h = np.where(mc, h_new, h)
        c = np.where(mc, c_new, c)
    empty = ~mask.any(axis=1)
    if empty.any():
        log.warning("%d input(s) without any real token; using a zero LSTM state", int(empty.sum()))
    if train_mode and dropout_rate > 0.0:
        if rng is None:
            raise ValueError("train_mode with dropout needs an rng")
        keep = (rng.random((B, h_dim)) >= dropout_rate).astype(dt) / dt.type(1.0 - dropout_rate)
        hd = h * keep
    else:
        keep = None
        hd = h
    v = np.concatenate([hd, bow.astype(dt, copy=False)], axis=1)
    u = np.tanh(v @ params.W_1.T + params.b_1)
    probs = softmax(u @ params.W_2.T + params.b_2)
    cache = {"params": params, "ids": ids, "steps": steps, "keep": keep, "v": v, "u": u,
             "probs": probs, "single": single}
    return (probs[0] if single else probs), cache


def backward(cache, label_id, freeze_embeddings: bool = False) -> ModelParams:
    """Gradients of the mean cross-entropy of the cached batch w.r.t. every parameter."""
    p: ModelParams = cache["params"]
    probs, u, v = cache["probs"], cache["u"], cache["v"]
    dt = p.dtype
    B = probs.shape[0]
    y = np.atleast_1d(np.asarray(label_id))
    h_dim = p.lstm.hidden

    dz = probs.copy()
    dz[np.arange(B), y] -= 1.0
    dz /= dt.type(B)
    dW2 = dz.T @ u
    db2 = dz.sum(axis=0)
    da1 = (dz @ p.W_2) * (1.0 - u * u)
    dW1 = da1.T @ v
    db1 = da1.sum(axis=0)
    dh = (da1 @ p.W_1)[:, :h_dim]
    if cache["keep"] is not None:
        dh = dh * cache["keep"]

    W, U, _ = p.lstm.stacked()
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(W.shape[0], dtype=dt)
    dE = np.zeros_like(p.embedding)
    dc = np.zeros_like(dh)
    ids = cache["ids"]
    for t in range(len(cache["steps"]) - 1, -1, -1):
        step = cache["steps"][t]
        if step is None:
            continue
        m, x, h_prev, c_prev, (i, f, g, o, tc) = step
        mc = m[:, None].astype(dt)
        dh_new = dh * mc
        dc_new = dc * mc + dh_new * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc_new * g * i * (1.0 - i),
            dc_new * c_prev * f * (1.0 - f),
            dc_new * i * (1.0 - g * g),
            dh_new * tc * o * (1.0 - o),
        ], axis=1)
        dW += da.T @ x
        dU += da.T @ h_prev
        db += da.sum(axis=0)
        if not freeze_embeddings:
            np.add.at(dE, ids[:, t], da @ W)
        dh = da @ U + dh * (1.0 - mc)
        dc = dc_new * f + dc * (1.0 - mc)
    dE[PADDING_INDEX] = 0.0
    return ModelParams(dE, LstmParams.from_stacked(dW, dU, db), dW1, db1, dW2, db2)


def loss(params: ModelParams, ex, labels) -> float:
    """Mean cross-entropy, evaluation mode."""
    probs, _ = forward(params, ex)
    return float(np.mean(batch_cross_entropy(np.atleast_2d(probs), np.atleast_1d(labels))))


@dataclass
class AdamState:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(theta, grads, state: AdamState):
    """One bias-corrected Adam update, in place.

    ``theta``/``grads`` are name -> array mappings; a bare array is treated as a
    single tensor. Returns ``(theta, state)``.
    """
    if isinstance(theta, np.ndarray):
        adam_step({"": theta}, {"": grads}, state)
        return theta, state
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(theta[name])
            state.v[name] = np.zeros_like(theta[name])
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        theta[name] -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return theta, state


@dataclass
class NeuralModel:
    """Trained parameters together with the vocabulary and label set they belong to."""

    params: ModelParams
    vocab: Vocabulary
    labels: LabelSet
    max_len: int = DEFAULT_MAX_LEN

    def encode(self, utterances: Sequence[Utterance]) -> EncodedCorpus:
        return encode_corpus(utterances, self.vocab, self.labels, self.max_len)

    def predict_proba(self, enc: EncodedCorpus) -> np.ndarray:
        return predict_proba(self.params, enc)

    def predict(self, utterances: Sequence[Utterance]) -> list[str]:
        ids = self.predict_proba(self.encode(utterances)).argmax(axis=1)
        return [self.labels.labels[i] for i in ids]

    def save(self, path: str | Path) -> None:
        tensors = {"meta.max_len": np.array(self.max_len, dtype=np.float32)}
        tensors.update(self.params.named())
        darn.write_container(path, "dnn", self.vocab.entries, list(self.labels.labels), tensors)

    @classmethod
    def load(cls, path: str | Path) -> "NeuralModel":
        kind, words, labels, tensors = darn.read_container(path)
        if kind != "dnn":
            raise darn.ModelFormatError(f"{path}: model type is {kind!r}, expected 'dnn'")
        vocab, labelset = Vocabulary(words), LabelSet(tuple(labels))
        V, K = vocab.size_v, len(labelset)
        for name in ("embedding", "lstm.b_i", "mlp.b_1"):
            if name not in tensors or tensors[name].ndim != (2 if name == "embedding" else 1):
                raise darn.ModelFormatError(f"{path}: missing or malformed tensor {name}")
        e = tensors["embedding"].shape[1]
        h = tensors["lstm.b_i"].shape[0]
        u = tensors["mlp.b_1"].shape[0]
        darn.expect_shape(tensors, "embedding", (V + 1, e))
        for g in GATES:
            darn.expect_shape(tensors, f"lstm.W_{g}", (h, e))
            darn.expect_shape(tensors, f"lstm.U_{g}", (h, h))
            darn.expect_shape(tensors, f"lstm.b_{g}", (h,))
        darn.expect_shape(tensors, "mlp.W_1", (u, h + V))
        darn.expect_shape(tensors, "mlp.W_2", (K, u))
        darn.expect_shape(tensors, "mlp.b_2", (K,))
        max_len = int(darn.expect_shape(tensors, "meta.max_len", ()))
        params = ModelParams.from_named({k: v for k, v in tensors.items() if not k.startswith("meta.")})
        return cls(params, vocab, labelset, max_len)


def predict_proba(params: ModelParams, enc: EncodedCorpus, chunk: int = EVAL_CHUNK) -> np.ndarray:
    """Evaluation-mode probabilities in fixed-size chunks (bitwise reproducible)."""
    out = np.empty((len(enc), params.n_labels), dtype=params.dtype)
    for s in range(0, len(enc), chunk):
        sl = slice(s, s + chunk)
        out[sl], _ = forward(params, (enc.token_ids[sl], enc.mask[sl], enc.prev_bow[sl]))
    return out


def predict(params: ModelParams, ex: EncodedSentence) -> tuple[int, np.ndarray]:
    probs, _ = forward(params, ex, train_mode=False)
    return int(np.argmax(probs)), probs


def _evaluate(params: ModelParams, enc: EncodedCorpus) -> tuple[float, float]:
    probs = predict_proba(params, enc)
    ok = enc.labels >= 0
    ce = batch_cross_entropy(probs[ok], enc.labels[ok])
    acc = float(np.mean(probs.argmax(axis=1) == enc.labels))
    return float(np.mean(ce, dtype=np.float64)), acc


def train(
    corpus: Sequence[Utterance],
    config: TrainConfig = TrainConfig(),
    init: EmbeddingMatrix | np.ndarray | None = None,
    *,
    pretrained: EmbeddingSet | None = None,
    vocab: Vocabulary | None = None,
    labels: LabelSet | None = None,
    test: Sequence[Utterance] | None = None,
) -> tuple[NeuralModel, list[dict]]:
    """Mini-batch Adam on the mean cross-entropy.

    ``init`` overrides the embedding table; otherwise it is built from
    ``pretrained`` (init modes "pretrained"/"oracle") or drawn at random.
    History holds one row per epoch (row 0 = before training).
    """
    if not corpus:
        raise ValueError("empty training corpus")
    dtype = np.dtype(config.dtype)
    vocab = vocab or build_vocabulary(corpus, config.vocab_size)
    labels = labels or LabelSet.from_utterances(corpus)
    if init is None:
        if config.init_mode != "random" and pretrained is None:
            raise ValueError(f"init_mode {config.init_mode!r} needs pretrained embeddings")
        src = pretrained if config.init_mode != "random" else None
        init = build_embedding_matrix(vocab, src, dim=config.embedding_dim, seed=config.seed, dtype=dtype)
    rows = init.rows if isinstance(init, EmbeddingMatrix) else np.asarray(init)
    if rows.shape[0] != vocab.size_v + 1:
        raise ValueError(f"embedding has {rows.shape[0]} rows, expected {vocab.size_v + 1}")
    params = init_params(rows, len(labels), config.lstm_hidden, config.mlp_hidden, config.seed, dtype)
    model = NeuralModel(params, vocab, labels, config.max_len)

    enc = model.encode(corpus)
    enc = enc.subset(enc.labels >= 0)
    test_enc = model.encode(test) if test else None
    rng = np.random.default_rng([config.seed, 2])
    state = AdamState(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    named = params.named()
    history = []

    def record(epoch):
        tl, ta = _evaluate(params, enc)
        if not np.isfinite(tl):
            raise TrainingDiverged(f"non-finite training loss after epoch {epoch}")
        row = {"epoch": epoch, "train_loss": tl, "train_acc": ta}
        if test_enc is not None:
            row["test_acc"] = _evaluate(params, test_enc)[1]
        history.append(row)
        log.info("epoch %d: %s", epoch, row)

    record(0)
    n = len(enc)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for s in range(0, n, config.batch_size):
            batch = enc.subset(order[s : s + config.batch_size])
            _, cache = forward(params, batch, train_mode=True, rng=rng, dropout_rate=config.dropout_rate)
            grads = backward(cache, batch.labels, freeze_embeddings=config.freeze_embeddings).named()
            if config.freeze_embeddings:
                del grads["embedding"]
            adam_step(named, grads, state)
        record(epoch)
    return model, history


def extract_embeddings(params: ModelParams, vocab: Vocabulary) -> EmbeddingSet:
    """Trained embedding rows for every vocabulary entry (UNK included, PADDING not)."""
    return EmbeddingSet(vocab.entries, params.embedding[1:].copy())


def write_history(history: list[dict], path: str | Path) -> None:
    cols = ["epoch", "train_loss", "train_acc"] + (["test_acc"] if history and "test_acc" in history[0] else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in history:
            w.writerow([row["epoch"]] + [f"{row[c]:.6f}" for c in cols[1:]])
