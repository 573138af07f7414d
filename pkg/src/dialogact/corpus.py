"""Utterances, vocabulary, fixed-length encoding and dialogue-level splits."""
from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

UNK = "<UNK>"
PADDING = "<PADDING>"
PADDING_INDEX = 0
DEFAULT_MAX_LEN = 15
TAIL_SLOTS = 5
PUNCTUATION = ".,!?;"


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    dialogue_id: str
    label: str
    tokens: tuple[str, ...]
    speaker: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))


def tokenize(text: str) -> list[str]:
    """Whitespace split with leading/trailing ``. , ! ? ;`` split off. Case kept."""
    out: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        while chunk and chunk[0] in PUNCTUATION:
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail: list[str] = []
        while chunk and chunk[-1] in PUNCTUATION:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        out.extend(lead)
        if chunk:
            out.append(chunk)
        out.extend(reversed(trail))
    return out


class Vocabulary:
    """Token <-> index map. Index 0 is PADDING, which is not counted in ``size_v``.

    Entries (UNK first, then words by descending frequency) occupy indices
    1..size_v.
    """

    padding_index = PADDING_INDEX

    def __init__(self, entries: Sequence[str]):
        entries = list(entries)
        if UNK not in entries:
            raise ValueError("vocabulary must contain UNK")
        if PADDING in entries:
            raise ValueError("PADDING is reserved and cannot be an entry")
        if len(set(entries)) != len(entries):
            raise ValueError("duplicate vocabulary entries")
        self.entries = entries
        self.index_of = {w: i + 1 for i, w in enumerate(entries)}
        self.unk_index = self.index_of[UNK]

    @property
    def size_v(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.index_of

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"Vocabulary(size_v={self.size_v})"

    def lookup(self, token: str) -> int:
        return self.index_of.get(token, self.unk_index)

    def word(self, index: int) -> str:
        if index == PADDING_INDEX:
            return PADDING
        return self.entries[index - 1]


def build_vocabulary(train_utterances: Iterable[Utterance], size: int = 1000) -> Vocabulary:
    """Keep the ``size - 1`` most frequent forms plus UNK.

    Ties are broken lexicographically. With fewer distinct forms the vocabulary
    simply holds all of them.
    """
    if size < 2:
        raise ValueError("vocabulary size must be >= 2")
    counts = Counter(tok for u in train_utterances for tok in u.tokens)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts.pop(UNK, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [w for w, _ in ranked[: size - 1]]
    if len(kept) < size - 1:
        log.info("only %d distinct forms; vocabulary shrinks to %d", len(kept), len(kept) + 1)
    return Vocabulary([UNK] + kept)


@dataclass(frozen=True)
class LabelSet:
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")

    @classmethod
    def from_utterances(cls, utterances: Iterable[Utterance]) -> "LabelSet":
        return cls(tuple(sorted({u.label for u in utterances})))

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown dialogue act label {label!r}") from None


@dataclass(frozen=True)
class EncodedSentence:
    token_ids: np.ndarray
    mask: np.ndarray
    prev_bow: np.ndarray
    label_id: int


def encode_sentence(
    tokens: Sequence[str], vocab: Vocabulary, L: int = DEFAULT_MAX_LEN
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-length layout: first ``L-5`` tokens left-aligned, last 5 tokens in the final 5 slots.

    Short sentences are duplicated into both regions; unused slots are PADDING
    with ``mask = False``.
    """
    if L < TAIL_SLOTS + 1:
        raise ValueError(f"max length must be >= {TAIL_SLOTS + 1}, got {L}")
    ids = np.full(L, PADDING_INDEX, dtype=np.int64)
    mask = np.zeros(L, dtype=bool)
    if not tokens:
        log.warning("empty utterance encoded as all-PADDING")
        return ids, mask
    idx = [vocab.lookup(t) for t in tokens]
    head = idx[: L - TAIL_SLOTS]
    tail = idx[-TAIL_SLOTS:]
    ids[: len(head)] = head
    mask[: len(head)] = True
    start = L - TAIL_SLOTS
    ids[start : start + len(tail)] = tail
    mask[start : start + len(tail)] = True
    return ids, mask


def bag_of_words(tokens: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    """Binary occurrence vector of length |V|; position j-1 holds vocabulary index j."""
    bow = np.zeros(vocab.size_v, dtype=np.float64)
    for t in tokens:
        bow[vocab.lookup(t) - 1] = 1.0
    return bow


def prev_bow(dialogue: Sequence[Utterance], i: int, vocab: Vocabulary) -> np.ndarray:
    if not 0 <= i < len(dialogue):
        raise IndexError(f"utterance index {i} outside dialogue of length {len(dialogue)}")
    if i == 0:
        return np.zeros(vocab.size_v, dtype=np.float64)
    return bag_of_words(dialogue[i - 1].tokens, vocab)


def group_dialogues(utterances: Sequence[Utterance]) -> list[list[Utterance]]:
    """Split a flat utterance list into contiguous dialogues."""
    dialogues: list[list[Utterance]] = []
    seen: set[str] = set()
    for u in utterances:
        if dialogues and dialogues[-1][0].dialogue_id == u.dialogue_id:
            dialogues[-1].append(u)
            continue
        if u.dialogue_id in seen:
            raise CorpusFormatError(f"dialogue {u.dialogue_id!r} is not contiguous")
        seen.add(u.dialogue_id)
        dialogues.append([u])
    return dialogues


@dataclass
class EncodedCorpus:
    """Stacked encodings: ids/mask (N, L), prev_bow (N, |V|), labels (N,)."""

    token_ids: np.ndarray
    mask: np.ndarray
    prev_bow: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "EncodedCorpus":
        return EncodedCorpus(self.token_ids[idx], self.mask[idx], self.prev_bow[idx], self.labels[idx])

    def __getitem__(self, i: int) -> EncodedSentence:
        return EncodedSentence(self.token_ids[i], self.mask[i], self.prev_bow[i], int(self.labels[i]))


def encode_corpus(
    utterances: Sequence[Utterance],
    vocab: Vocabulary,
    labels: LabelSet,
    L: int = DEFAULT_MAX_LEN,
) -> EncodedCorpus:
    n = len(utterances)
    ids = np.zeros((n, L), dtype=np.int64)
    mask = np.zeros((n, L), dtype=bool)
    bows = np.zeros((n, vocab.size_v), dtype=np.float64)
    ys = np.full(n, -1, dtype=np.int64)
    label_index = {lab: i for i, lab in enumerate(labels.labels)}
    row = 0
    for dialogue in group_dialogues(utterances):
        for i, u in enumerate(dialogue):
            ids[row], mask[row] = encode_sentence(u.tokens, vocab, L)
            bows[row] = prev_bow(dialogue, i, vocab)
            # unseen labels stay -1: always counted wrong, never trained on
            ys[row] = label_index.get(u.label, -1)
            row += 1
    return EncodedCorpus(ids, mask, bows, ys)


def kfold_split(
    examples: Sequence[Utterance], k: int, seed: int = 0
) -> list[tuple[list[Utterance], list[Utterance]]]:
    """Dialogue-granular k-fold partition; deterministic for a given seed."""
    if k < 2:
        raise ValueError("k must be >= 2")
    dialogues = group_dialogues(examples)
    if k > len(dialogues):
        raise ValueError(f"k={k} exceeds the number of dialogues ({len(dialogues)})")
    order = np.random.default_rng(seed).permutation(len(dialogues))
    fold_of = np.empty(len(dialogues), dtype=np.int64)
    for f, chunk in enumerate(np.array_split(order, k)):
        fold_of[chunk] = f
    folds = []
    for f in range(k):
        train = [u for d, dia in enumerate(dialogues) if fold_of[d] != f for u in dia]
        test = [u for d, dia in enumerate(dialogues) if fold_of[d] == f for u in dia]
        folds.append((train, test))
    return folds


def subsample_dialogues(
    utterances: Sequence[Utterance], n_utterances: int, seed: int
) -> list[Utterance]:
    """Seeded dialogue-granular prefix sample holding at least ``n_utterances``.

    For a fixed seed the samples are nested: smaller sizes are subsets of larger ones.
    """
    dialogues = group_dialogues(utterances)
    order = np.random.default_rng(seed).permutation(len(dialogues))
    chosen: list[int] = []
    total = 0
    for d in order:
        if total >= n_utterances:
            break
        chosen.append(int(d))
        total += len(dialogues[d])
    chosen.sort()
    return [u for d in chosen for u in dialogues[d]]


def read_corpus(path: str | Path, pretokenized: bool = False) -> list[Utterance]:
    """Read ``dialogue_id<TAB>label<TAB>text`` lines; blank lines are skipped."""
    utts: list[Utterance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            did, label, text = parts
            if not did or not label:
                raise CorpusFormatError(f"{path}:{lineno}: empty dialogue id or label")
            tokens = text.split() if pretokenized else tokenize(text)
            if not tokens:
                log.warning("%s:%d: empty utterance", path, lineno)
            utts.append(Utterance(did, label, tuple(tokens)))
    try:
        group_dialogues(utts)
    except CorpusFormatError as exc:
        raise CorpusFormatError(f"{path}: {exc}") from None
    return utts


def write_corpus(utterances: Iterable[Utterance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in utterances:
            fh.write(f"{u.dialogue_id}\t{u.label}\t{' '.join(u.tokens)}\n")


def corpus_hash(utterances: Iterable[Utterance]) -> str:
    h = hashlib.sha256()
    for u in utterances:
        h.update(f"{u.dialogue_id}\t{u.label}\t{' '.join(u.tokens)}\n".encode("utf-8"))
    return h.hexdigest()
