"""word2vec binary I/O, embedding-matrix construction and cosine analysis."""
from __future__ import annotations

import csv
import logging
import mmap
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import PADDING_INDEX, UNK, Vocabulary

log = logging.getLogger(__name__)

INIT_SCALE = 0.05
_FLOAT = np.dtype("<f4")


class Word2VecFormatError(ValueError):
    """Malformed word2vec binary file; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class EmbeddingSet:
    """Word -> vector table backed by a (n, dim) float32 matrix."""

    def __init__(self, words: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(words):
            raise ValueError("vectors must be (len(words), dim)")
        if vectors.shape[1] < 1:
            raise ValueError("embedding dimension must be >= 1")
        self.words = list(words)
        self.vectors = vectors
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in embedding set")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[self.index[word]]

    def get(self, word: str, casefold: bool = False) -> np.ndarray | None:
        i = self.index.get(word)
        if i is None and casefold:
            i = self.index.get(word.lower())
        return None if i is None else self.vectors[i]


def load_word2vec_binary(path: str | Path, limit: int | None = None) -> EmbeddingSet:
    """Parse the word2vec C tool's binary format.

    Header ``"<count> <dim>\\n"``, then ``count`` records of ``word 0x20`` followed by
    ``dim`` little-endian float32 values and an optional ``0x0A``.
    """
    with open(path, "rb") as fh:
        size = fh.seek(0, 2)
        if size == 0:
            raise Word2VecFormatError("empty file", 0)
        with mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ) as buf:
            return _parse(buf, size, limit)


def _parse(buf, size: int, limit: int | None) -> EmbeddingSet:
    nl = buf.find(b"\n", 0, min(size, 256))
    if nl < 0:
        raise Word2VecFormatError("header line not terminated by newline", 0)
    header = bytes(buf[:nl])
    parts = header.split(b" ")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise Word2VecFormatError(f"malformed header {header!r}", 0)
    count, dim = int(parts[0]), int(parts[1])
    if dim < 1:
        raise Word2VecFormatError(f"dimension must be >= 1, got {dim}", 0)
    n = count if limit is None else min(count, limit)
    nbytes = dim * _FLOAT.itemsize
    words: list[str] = []
    seen: set[str] = set()
    vectors = np.empty((n, dim), dtype=np.float32)
    pos = nl + 1
    for k in range(n):
        if k > 0 and pos < size and buf[pos] == 0x0A:
            pos += 1
        if pos >= size:
            raise Word2VecFormatError(f"file ends before record {k} (of {count})", pos)
        sp = buf.find(b" ", pos)
        if sp < 0:
            raise Word2VecFormatError(f"record {k}: word not terminated by a space", pos)
        raw = bytes(buf[pos:sp])
        if not raw or b"\n" in raw:
            raise Word2VecFormatError(f"record {k}: empty or malformed word {raw!r}", pos)
        try:
            word = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise Word2VecFormatError(f"record {k}: word is not valid UTF-8", pos) from None
        if word in seen:
            raise Word2VecFormatError(f"record {k}: duplicate word {word!r}", pos)
        start = sp + 1
        if start + nbytes > size:
            raise Word2VecFormatError(
                f"record {k} ({word!r}): truncated vector, need {nbytes} bytes, have {size - start}",
                start,
            )
        vectors[k] = np.frombuffer(buf, dtype=_FLOAT, count=dim, offset=start)
        words.append(word)
        seen.add(word)
        pos = start + nbytes
    if limit is None:
        if pos < size and buf[pos] == 0x0A:
            pos += 1
        if pos != size:
            raise Word2VecFormatError(
                f"{size - pos} trailing bytes after the declared {count} records", pos
            )
    return EmbeddingSet(words, vectors)


def save_word2vec_binary(emb: EmbeddingSet, path: str | Path) -> None:
    if len(emb) == 0:
        raise ValueError("refusing to write an empty embedding set")
    data = np.ascontiguousarray(emb.vectors, dtype=_FLOAT)
    with open(path, "wb") as fh:
        fh.write(f"{len(emb)} {emb.dim}\n".encode("ascii"))
        for word, vec in zip(emb.words, data):
            fh.write(word.encode("utf-8") + b" ")
            fh.write(vec.tobytes())
            fh.write(b"\n")


def init_random(rows: int, dim: int, seed: int, dtype=np.float32) -> np.ndarray:
    """Uniform(-0.05, 0.05) matrix with row 0 (PADDING) zeroed."""
    if rows < 1 or dim < 1:
        raise ValueError("rows and dim must be >= 1")
    rng = np.random.default_rng(seed)
    m = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(rows, dim)).astype(dtype)
    m[PADDING_INDEX] = 0.0
    return m


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray
    matched: int
    coverage: float


def build_embedding_matrix(
    vocab: Vocabulary,
    pretrained: EmbeddingSet | None = None,
    dim: int | None = None,
    seed: int = 0,
    casefold: bool = False,
    dtype=np.float32,
) -> EmbeddingMatrix:
    """(|V|+1, d_e) lookup table; pretrained vectors copied where available.

    UNK and words missing from ``pretrained`` keep their random rows.
    """
    if dim is None:
        if pretrained is None:
            raise ValueError("dim is required without pretrained embeddings")
        dim = pretrained.dim
    if pretrained is not None and pretrained.dim != dim:
        raise ValueError(f"pretrained dimension {pretrained.dim} != configured {dim}")
    rows = init_random(vocab.size_v + 1, dim, seed, dtype=dtype)
    matched = 0
    if pretrained is not None:
        for word, j in vocab.index_of.items():
            if word == UNK:
                continue
            vec = pretrained.get(word, casefold=casefold)
            if vec is not None:
                rows[j] = vec
                matched += 1
        log.info("pretrained coverage %d/%d", matched, vocab.size_v)
    return EmbeddingMatrix(rows, matched, matched / vocab.size_v)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for a zero vector")
    return float(u @ v / (nu * nv))


def nearest_neighbors(
    word: str, k: int, emb: EmbeddingSet, include_query: bool = True
) -> list[tuple[str, float]]:
    """Top-k words by cosine similarity to ``word``; ties broken lexicographically.

    Zero vectors are skipped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if word not in emb:
        raise KeyError(f"word {word!r} not in embedding set")
    m = emb.vectors.astype(np.float64)
    norms = np.linalg.norm(m, axis=1)
    q = m[emb.index[word]]
    qn = norms[emb.index[word]]
    if qn == 0.0:
        raise ValueError(f"query word {word!r} has a zero vector")
    valid = norms > 0
    sims = np.full(len(emb), -np.inf)
    sims[valid] = (m[valid] @ q) / (norms[valid] * qn)
    sims[emb.index[word]] = 1.0
    if not include_query:
        sims[emb.index[word]] = -np.inf
    pool = np.flatnonzero(np.isfinite(sims))
    if len(pool) > k:
        # everything tied with the k-th best must stay in for the lexicographic tie-break
        kth = np.partition(sims[pool], len(pool) - k)[len(pool) - k]
        pool = pool[sims[pool] >= kth]
    ranked = sorted(pool.tolist(), key=lambda i: (-sims[i], emb.words[i]))
    return [(emb.words[i], float(sims[i])) for i in ranked[:k]]


def avg_sentence_embedding(tokens: Iterable[str], emb: EmbeddingSet) -> np.ndarray:
    vecs = [emb[t] for t in tokens if t in emb]
    if not vecs:
        log.debug("no token of the sentence has an embedding; using zeros")
        return np.zeros(emb.dim, dtype=np.float64)
    return np.mean(np.asarray(vecs, dtype=np.float64), axis=0)


def neighbor_rows(queries: Sequence[str], k: int, emb: EmbeddingSet) -> list[tuple[str, int, str, float]]:
    rows = []
    for q in queries:
        for rank, (w, s) in enumerate(nearest_neighbors(q, k, emb), 1):
            rows.append((q, rank, w, s))
    return rows


def format_neighbor_table(queries: Sequence[str], k: int, emb: EmbeddingSet) -> str:
    """Side-by-side columns of the k nearest words for each query."""
    cols = [[f"{w} ({s:.3f})" for w, s in nearest_neighbors(q, k, emb)] for q in queries]
    widths = [max(len(q), *(len(c) for c in col)) for q, col in zip(queries, cols)]
    lines = ["  ".join(q.ljust(w) for q, w in zip(queries, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in range(k):
        cells = [(col[r] if r < len(col) else "").ljust(w) for col, w in zip(cols, widths)]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def format_pair_table(pairs: Sequence[tuple[str, str]], emb: EmbeddingSet) -> str:
    heads = [f"{a}:{b}" for a, b in pairs]
    vals = [f"{cosine(emb[a], emb[b]):.3f}" for a, b in pairs]
    widths = [max(len(h), len(v)) for h, v in zip(heads, vals)]
    return "\n".join([
        "  ".join(h.rjust(w) for h, w in zip(heads, widths)),
        "  ".join(v.rjust(w) for v, w in zip(vals, widths)),
    ])


def write_neighbor_csv(rows, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query", "rank", "word", "cosine"])
        for q, r, word, s in rows:
            w.writerow([q, r, word, f"{s:.6f}"])
