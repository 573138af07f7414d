"""Accuracy with Wald intervals, cross-validation, ablation experiments and
bigram/Viterbi rescoring of per-utterance label distributions."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Utterance, corpus_hash, group_dialogues, kfold_split, subsample_dialogues
from .embeddings import EmbeddingSet
from .maxent import LbfgsConfig, train_maxent
from .neural import TrainConfig, extract_embeddings, train
from .numerics import PROB_FLOOR

log = logging.getLogger(__name__)

Trainer = Callable[[Sequence[Utterance], Sequence[Utterance]], Sequence[str]]

SWEEP_PARAMS = ("embedding_dim", "mlp_hidden", "max_len", "lstm_hidden", "vocab_size")
DEFAULT_CURVE_FRACTIONS = (0.01, 0.02, 0.05, 0.10, 0.25, 0.50, 1.0)


def wald_ci(p_hat: float, n: int, z: float = 1.96) -> float:
    """Half-width z * sqrt(p(1-p)/n) of the normal-approximation interval."""
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError("p_hat must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    return z * math.sqrt(p_hat * (1.0 - p_hat) / n)


def accuracy(predictions: Sequence, golds: Sequence) -> float:
    if len(predictions) != len(golds) or not golds:
        raise ValueError("predictions and golds must be non-empty and of equal length")
    return sum(p == g for p, g in zip(predictions, golds)) / len(golds)


@dataclass
class ExperimentReport:
    accuracy: float
    n: int
    ci_half_width: float
    per_fold: list[float] | None = None
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, correct: int, n: int, **kw) -> "ExperimentReport":
        acc = correct / n
        return cls(acc, n, wald_ci(acc, n), **kw)

    def summary(self) -> str:
        """E.g. ``72.8% ± 1.35% (n=4182)``."""
        return f"{100 * self.accuracy:.1f}% ± {100 * self.ci_half_width:.2f}% (n={self.n})"

    def to_text(self) -> str:
        lines = [f"accuracy: {self.summary()}"]
        for i, a in enumerate(self.per_fold or []):
            lines.append(f"fold {i}: {100 * a:.2f}%")
        for k, v in sorted(self.metadata.items()):
            lines.append(f"{k}: {v}")
        return "\n".join(lines)


def cross_validate(
    trainer: Trainer, corpus: Sequence[Utterance], k: int = 10, seed: int = 0, metadata: dict | None = None
) -> ExperimentReport:
    """Pooled (micro-averaged) accuracy over k dialogue-granular folds."""
    correct = 0
    total = 0
    per_fold = []
    for train_part, test_part in kfold_split(corpus, k, seed):
        preds = trainer(train_part, test_part)
        hits = sum(p == u.label for p, u in zip(preds, test_part))
        per_fold.append(hits / len(test_part))
        correct += hits
        total += len(test_part)
    meta = {"k": k, "seed": seed, "corpus_sha256": corpus_hash(corpus)}
    meta.update(metadata or {})
    return ExperimentReport.from_counts(correct, total, per_fold=per_fold, metadata=meta)


def dnn_trainer(config: TrainConfig = TrainConfig(), pretrained: EmbeddingSet | None = None) -> Trainer:
    def run(train_part, test_part):
        model, _ = train(train_part, config, pretrained=pretrained)
        return model.predict(test_part)

    return run


def maxent_trainer(
    vocab_size: int = 1000, embeddings: EmbeddingSet | None = None, cfg: LbfgsConfig = LbfgsConfig()
) -> Trainer:
    def run(train_part, test_part):
        model = train_maxent(train_part, vocab_size, embeddings, cfg)
        return model.predict(test_part, embeddings)

    return run


def oracle_embeddings(corpus: Sequence[Utterance], config: TrainConfig = TrainConfig()) -> EmbeddingSet:
    """Embeddings of a model trained on the whole corpus (random init)."""
    model, _ = train(corpus, replace(config, init_mode="random"))
    return extract_embeddings(model.params, model.vocab)


def learning_curve(
    train_corpus: Sequence[Utterance],
    test_corpus: Sequence[Utterance],
    sizes: Iterable[int],
    init_modes: Iterable[str] = ("random",),
    seeds: Iterable[int] = (0,),
    config: TrainConfig = TrainConfig(epochs=5),
    pretrained: EmbeddingSet | None = None,
    oracle: EmbeddingSet | None = None,
) -> list[dict]:
    """Test accuracy per (mode, size, seed) on nested dialogue-granular subsamples.

    Within a seed, all init modes share the subsample and every random draw
    except the embedding rows taken from the supplied embedding set.
    """
    sources = {"random": None, "pretrained": pretrained, "oracle": oracle}
    init_modes, sizes, seeds = list(init_modes), list(sizes), list(seeds)
    for mode in init_modes:
        if mode not in sources:
            raise ValueError(f"unknown init mode {mode!r}")
        if mode != "random" and sources[mode] is None:
            raise ValueError(f"init mode {mode!r} needs its embedding set")
    rows = []
    for mode in init_modes:
        for size in sizes:
            if size > len(train_corpus):
                log.warning("size %d exceeds corpus (%d); clamped", size, len(train_corpus))
                size = len(train_corpus)
            for seed in seeds:
                sub = subsample_dialogues(train_corpus, size, seed)
                cfg = replace(config, seed=seed, init_mode=mode)
                model, _ = train(sub, cfg, pretrained=sources[mode])
                acc = accuracy(model.predict(test_corpus), [u.label for u in test_corpus])
                rows.append({"mode": mode, "size": size, "seed": seed, "accuracy": acc})
    return rows


def hyper_sweep(
    param: str,
    values: Iterable,
    corpus: Sequence[Utterance],
    folds: int = 5,
    seed: int = 0,
    config: TrainConfig = TrainConfig(),
    trainer_factory: Callable[[TrainConfig], Trainer] = dnn_trainer,
) -> list[dict]:
    """Cross-validated accuracy per value of one hyper-parameter; rows ``param,value,fold,accuracy``.

    An invalid value yields a single row with ``fold="error"`` and NaN accuracy.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"cannot sweep {param!r}; choose from {SWEEP_PARAMS}")
    values = list(values)
    if not values:
        raise ValueError("no values to sweep")
    rows = []
    for value in values:
        try:
            cfg = replace(config, **{param: value})
        except (TypeError, ValueError) as exc:
            log.warning("sweep %s=%r rejected: %s", param, value, exc)
            rows.append({"param": param, "value": value, "fold": "error", "accuracy": float("nan")})
            continue
        report = cross_validate(trainer_factory(cfg), corpus, folds, seed)
        for f, acc in enumerate(report.per_fold):
            rows.append({"param": param, "value": value, "fold": f, "accuracy": acc})
    return rows


def write_rows(rows: Sequence[dict], header: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return v


@dataclass
class BigramModel:
    """Add-k smoothed label bigram; ``priors`` is the transition out of the start symbol."""

    counts: np.ndarray
    start_counts: np.ndarray
    k: float = 1.0

    @property
    def n_labels(self) -> int:
        return self.counts.shape[0]

    @staticmethod
    def _normalize(counts: np.ndarray, k: float) -> np.ndarray:
        sm = counts + k
        tot = sm.sum(axis=-1, keepdims=True)
        n = counts.shape[-1]
        # unseen history without smoothing: fall back to uniform
        return np.divide(sm, tot, out=np.full_like(sm, 1.0 / n), where=tot > 0)

    @property
    def transitions(self) -> np.ndarray:
        return self._normalize(self.counts, self.k)

    @property
    def priors(self) -> np.ndarray:
        return self._normalize(self.start_counts, self.k)

    def to_dict(self) -> dict:
        return asdict(self)


def train_bigram(label_sequences: Iterable[Sequence[int]], n_labels: int | None = None, k: float = 1.0) -> BigramModel:
    seqs = [list(s) for s in label_sequences]
    if not seqs:
        raise ValueError("no label sequences")
    if k < 0:
        raise ValueError("smoothing k must be >= 0")
    if n_labels is None:
        n_labels = 1 + max(max(s) for s in seqs if s)
    counts = np.zeros((n_labels, n_labels))
    start = np.zeros(n_labels)
    for s in seqs:
        if not s:
            continue
        start[s[0]] += 1
        for a, b in zip(s, s[1:]):
            counts[a, b] += 1
    return BigramModel(counts, start, float(k))


def viterbi_rescore(lattice: np.ndarray, bigram: BigramModel, weight: float = 1.0) -> list[int]:
    """Label sequence maximizing sum_t log p(y_t|x_t) + weight * log P(y_t|y_{t-1}).

    Ties go to the lowest label index: first for the final label, then for
    each back-pointer while tracing the path backwards.
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    T, K = lattice.shape
    if K != bigram.n_labels:
        raise ValueError(f"lattice has {K} labels, bigram has {bigram.n_labels}")
    if T == 0:
        return []
    emit = np.log(np.maximum(lattice, PROB_FLOOR))
    if weight == 0.0:
        return [int(i) for i in emit.argmax(axis=1)]
    trans = weight * np.log(np.maximum(bigram.transitions, PROB_FLOOR))
    score = emit[0] + weight * np.log(np.maximum(bigram.priors, PROB_FLOOR))
    back = np.zeros((T, K), dtype=np.int64)
    for t in range(1, T):
        cand = score[:, None] + trans
        back[t] = cand.argmax(axis=0)
        score = cand[back[t], np.arange(K)] + emit[t]
    path = [int(score.argmax())]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    return path[::-1]


def rescore_corpus(
    probs: np.ndarray, utterances: Sequence[Utterance], bigram: BigramModel, weight: float = 1.0
) -> np.ndarray:
    """Apply :func:`viterbi_rescore` dialogue by dialogue; returns label ids."""
    out = np.empty(len(utterances), dtype=np.int64)
    row = 0
    for dia in group_dialogues(utterances):
        n = len(dia)
        out[row : row + n] = viterbi_rescore(probs[row : row + n], bigram, weight)
        row += n
    return out
