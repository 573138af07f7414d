"""Templated synthetic dialogues for desk-scale experiments.

Statements ("sd") and yes/no questions ("qy") are generated as twins sharing
the same token multiset, differing only in subject/auxiliary order, and both
twins always land in the same dialogue. Any bag-of-words classifier therefore
sees identical features for each twin pair, while an order-aware model can
separate them.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .corpus import Utterance

SUBJECTS = ("you", "we", "they", "he", "she", "i")
AUXILIARIES = ("can", "will", "should", "could", "would", "did", "must", "might")
VERBS = ("go", "stay", "come", "help", "leave", "call", "wait", "win", "swim",
         "drive", "cook", "read", "sing", "work", "travel")
ADVERBS = ("home", "there", "today", "tomorrow", "again", "early", "later",
           "alone", "fast", "outside", "tonight", "anyway")
FILLERS = ("well", "so", "oh", "uh", "um", "and")
WH_WORDS = ("what", "where", "when", "why", "how", "who")
ADJECTIVES = ("great", "fine", "good", "bad", "hard", "easy", "nice", "awful")
YES = (("yes",), ("yeah",), ("yep",), ("sure",), ("absolutely",), ("of", "course"))
NO = (("no",), ("nope",), ("not", "really"), ("never",), ("no", "way"))
BACKCHANNEL = (("uh-huh",), ("right",), ("okay",), ("i", "see"), ("mm-hmm",), ("got", "it"))
CLOSING = (("bye",), ("goodbye",), ("see", "you", "later"), ("talk", "to", "you", "soon"),
           ("take", "care"), ("have", "a", "nice", "day"))

LABELS = ("b", "fc", "nn", "ny", "qw", "qy", "sd", "sv")
ORDER_PAIR = ("sd", "qy")

# expected per-block label counts (yes/no answers split evenly)
_BLOCK_LABELS = {
    "order": {"sd": 1.0, "b": 1.0, "qy": 1.0, "ny": 0.5, "nn": 0.5},
    "wh": {"qw": 1.0, "sv": 1.0},
    "opinion": {"sv": 1.0, "b": 1.0},
}


@dataclass(frozen=True)
class SyntheticConfig:
    block_weights: dict = field(
        default_factory=lambda: {"order": 0.5, "wh": 0.3, "opinion": 0.2}
    )
    min_blocks: int = 2
    max_blocks: int = 5
    filler_prob: float = 0.3
    adverb_prob: float = 0.6

    def expected_mixture(self) -> dict[str, float]:
        """Expected share of each label over many dialogues."""
        total_w = sum(self.block_weights.values())
        mean_blocks = (self.min_blocks + self.max_blocks) / 2
        exp = Counter({lab: 0.0 for lab in LABELS})
        for block, w in self.block_weights.items():
            for lab, c in _BLOCK_LABELS[block].items():
                exp[lab] += mean_blocks * c * w / total_w
        exp["fc"] += 2.0
        z = sum(exp.values())
        return {lab: exp[lab] / z for lab in LABELS}


def vocabulary_forms() -> set[str]:
    """Every surface form the generator can emit."""
    forms = set(SUBJECTS) | set(AUXILIARIES) | set(VERBS) | set(ADVERBS)
    forms |= set(FILLERS) | set(WH_WORDS) | set(ADJECTIVES)
    forms |= {"i", "think", "it", "is", "that", "sounds", "was", "not"}
    for group in (YES, NO, BACKCHANNEL, CLOSING):
        for phrase in group:
            forms |= set(phrase)
    return forms


class _Grammar:
    def __init__(self, rng: np.random.Generator, cfg: SyntheticConfig):
        self.rng = rng
        self.cfg = cfg

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def clause_parts(self):
        prefix = [self.pick(FILLERS)] if self.rng.random() < self.cfg.filler_prob else []
        subj, aux, verb = self.pick(SUBJECTS), self.pick(AUXILIARIES), self.pick(VERBS)
        suffix = [self.pick(ADVERBS)] if self.rng.random() < self.cfg.adverb_prob else []
        return prefix, subj, aux, verb, suffix

    def twins(self):
        prefix, subj, aux, verb, suffix = self.clause_parts()
        statement = prefix + [subj, aux, verb] + suffix
        question = prefix + [aux, subj, verb] + suffix
        return tuple(statement), tuple(question)

    def wh_question(self):
        prefix, subj, aux, verb, suffix = self.clause_parts()
        return tuple(prefix + [self.pick(WH_WORDS), aux, subj, verb] + suffix)

    def opinion(self):
        adj = self.pick(ADJECTIVES)
        form = int(self.rng.integers(3))
        if form == 0:
            return ("i", "think", "it", "is", adj)
        if form == 1:
            return ("that", "sounds", adj)
        return ("i", "think", "that", "was", adj)

    def answer(self, yes: bool, subj: str, aux: str):
        # occasionally echo the auxiliary: "yes i can" / "no we can not"
        if self.rng.random() < 0.3:
            return ("yes", subj, aux) if yes else ("no", subj, aux, "not")
        return self.pick(YES if yes else NO)


def _block(g: _Grammar, kind: str) -> list[tuple[str, tuple[str, ...]]]:
    if kind == "order":
        statement, question = g.twins()
        first = [("sd", statement), ("b", g.pick(BACKCHANNEL))]
        yes = bool(g.rng.random() < 0.5)
        second = [("qy", question), ("ny" if yes else "nn", g.answer(yes, g.pick(SUBJECTS), g.pick(AUXILIARIES)))]
        return first + second if g.rng.random() < 0.5 else second + first
    if kind == "wh":
        return [("qw", g.wh_question()), ("sv", g.opinion())]
    if kind == "opinion":
        return [("sv", g.opinion()), ("b", g.pick(BACKCHANNEL))]
    raise ValueError(f"unknown block kind {kind!r}")


def iter_dialogues(seed: int, cfg: SyntheticConfig | None = None, prefix: str = "syn") -> Iterator[list[Utterance]]:
    cfg = cfg or SyntheticConfig()
    rng = np.random.default_rng(seed)
    g = _Grammar(rng, cfg)
    kinds = sorted(cfg.block_weights)
    w = np.array([cfg.block_weights[k] for k in kinds], dtype=np.float64)
    w /= w.sum()
    d = 0
    while True:
        did = f"{prefix}{seed}-{d:05d}"
        n_blocks = int(rng.integers(cfg.min_blocks, cfg.max_blocks + 1))
        turns: list[tuple[str, tuple[str, ...]]] = []
        for _ in range(n_blocks):
            turns.extend(_block(g, kinds[int(rng.choice(len(kinds), p=w))]))
        turns.append(("fc", g.pick(CLOSING)))
        turns.append(("fc", g.pick(CLOSING)))
        yield [
            Utterance(did, lab, toks, speaker="AB"[i % 2])
            for i, (lab, toks) in enumerate(turns)
        ]
        d += 1


def generate_synthetic(n_dialogues: int, seed: int = 0, cfg: SyntheticConfig | None = None) -> list[Utterance]:
    if n_dialogues < 1:
        raise ValueError("n_dialogues must be >= 1")
    it = iter_dialogues(seed, cfg)
    return [u for _ in range(n_dialogues) for u in next(it)]


def synthetic_split(
    n_train: int = 2000, n_test: int = 500, seed: int = 0, cfg: SyntheticConfig | None = None
) -> tuple[list[Utterance], list[Utterance]]:
    """Train/test corpora of at least the requested utterance counts, split by dialogue."""
    it = iter_dialogues(seed, cfg)
    train: list[Utterance] = []
    while len(train) < n_train:
        train.extend(next(it))
    test: list[Utterance] = []
    while len(test) < n_test:
        test.extend(next(it))
    return train, test


def manifest(utterances: Sequence[Utterance]) -> list[tuple[str, int]]:
    counts = Counter(u.label for u in utterances)
    return sorted(counts.items())


def write_manifest(utterances: Sequence[Utterance], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "count"])
        w.writerows(manifest(utterances))
