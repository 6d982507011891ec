"""Word embeddings and reviewer representations.

A reviewer is represented by the element-wise max over the averaged word
embeddings of every sentence they wrote, followed by their Negative Ratio
(share of 1- and 2-star reviews).
"""
from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, Review
from .nncore import DTYPE, sigmoid

log = logging.getLogger(__name__)

EMBED_HEADER = "#groupsleuth-embeddings v1"
VECTORS_HEADER = "#groupsleuth-reviewer-vectors v1"

_TOKEN = re.compile(r"[^\W_]+")
_SENTENCE = re.compile(r"[.!?]+")


class RepresentationError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def split_sentences(text: str) -> list[list[str]]:
    out = []
    for chunk in _SENTENCE.split(text):
        toks = tokenize(chunk)
        if toks:
            out.append(toks)
    return out


@dataclass
class EmbeddingTable:
    vocab: dict[str, int]
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[self.vocab[word]]

    def cosine(self, a: str, b: str) -> float:
        return cosine(self[a], self[b])


def cosine(u, v) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def train_cbow(corpus: Corpus | Iterable[str], dim: int = 100, window: int = 2, batch: int = 512,
               epochs: int = 5, seed: int = 0, negatives: int = 5, min_count: int = 1,
               lr: float = 0.05) -> EmbeddingTable:
    """Continuous bag-of-words with negative sampling.

    Context windows never cross review boundaries. The learning rate decays
    linearly to ``lr * 1e-3`` over the whole run. Mini-batches of ``batch``
    centre words are updated with plain SGD; the input embeddings are returned.
    """
    texts = [r.text for r in corpus.reviews] if isinstance(corpus, Corpus) else list(corpus)
    docs = [tokenize(t) for t in texts]
    counts = Counter(tok for d in docs for tok in d)
    words = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    if not words:
        raise RepresentationError("empty vocabulary")
    vocab = {w: i for i, w in enumerate(words)}
    rng = np.random.default_rng(seed)
    n_vocab = len(words)
    w_in = ((rng.random((n_vocab, dim)) - 0.5) / dim).astype(DTYPE)
    w_out = np.zeros((n_vocab, dim), dtype=DTYPE)

    noise = np.array([counts[w] for w in words], dtype=np.float64) ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    centres, contexts = [], []
    for d in docs:
        ids = [vocab[t] for t in d if t in vocab]
        for pos, c in enumerate(ids):
            ctx = ids[max(0, pos - window): pos] + ids[pos + 1: pos + 1 + window]
            if ctx:
                centres.append(c)
                contexts.append(ctx + [-1] * (2 * window - len(ctx)))
    if not centres:
        return EmbeddingTable(vocab, w_in)
    centres_arr = np.array(centres, dtype=np.int64)
    ctx_arr = np.array(contexts, dtype=np.int64)
    n = len(centres_arr)
    total_steps = epochs * ((n + batch - 1) // batch)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            alpha = lr * max(1e-3, 1.0 - step / max(1, total_steps))
            step += 1
            idx = order[start: start + batch]
            ctx = ctx_arr[idx]
            mask = (ctx >= 0).astype(DTYPE)
            safe = np.where(ctx >= 0, ctx, 0)
            n_ctx = mask.sum(axis=1, keepdims=True)
            h = (w_in[safe] * mask[..., None]).sum(axis=1) / n_ctx
            neg = np.searchsorted(noise_cdf, rng.random((len(idx), negatives)))
            neg = np.minimum(neg, n_vocab - 1)
            targets = np.concatenate([centres_arr[idx, None], neg], axis=1)
            labels = np.zeros(targets.shape, dtype=DTYPE)
            labels[:, 0] = 1
            u = w_out[targets]
            score = sigmoid(np.einsum("bd,bkd->bk", h, u))
            g = (score - labels) * alpha
            dh = np.einsum("bk,bkd->bd", g, u)
            np.add.at(w_out, targets, -(g[..., None] * h[:, None, :]))
            dctx = (dh / n_ctx)[:, None, :] * mask[..., None]
            np.add.at(w_in, safe, -dctx)
    return EmbeddingTable(vocab, w_in)


def save_embeddings(table: EmbeddingTable, path) -> None:
    inv = sorted(table.vocab.items(), key=lambda kv: kv[1])
    lines = [EMBED_HEADER]
    for word, i in inv:
        lines.append(word + " " + " ".join(format(float(x), ".9g") for x in table.vectors[i]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embeddings(path, dim: int | None = 100) -> EmbeddingTable:
    """Parse ``word v1 ... vF`` lines. Later duplicates overwrite earlier ones."""
    vocab: dict[str, int] = {}
    rows: list[np.ndarray] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#groupsleuth-embeddings"):
            if line != EMBED_HEADER:
                raise RepresentationError(f"unsupported embeddings version {line!r}")
            continue
        parts = line.split()
        values = parts[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise RepresentationError(f"line {lineno}: expected {dim} values, got {len(values)}")
        try:
            vec = np.array([float(v) for v in values], dtype=DTYPE)
        except ValueError as exc:
            raise RepresentationError(f"line {lineno}: {exc}") from exc
        word = parts[0]
        if word in vocab:
            log.warning("duplicate embedding for %r on line %d; keeping the later one", word, lineno)
            rows[vocab[word]] = vec
        else:
            vocab[word] = len(rows)
            rows.append(vec)
    if not rows:
        raise RepresentationError(f"no embeddings in {path}")
    return EmbeddingTable(vocab, np.stack(rows))


def sentence_sowe(sentence: Sequence[str], table: EmbeddingTable) -> np.ndarray | None:
    """Average embedding of the in-vocabulary tokens; ``None`` if every token is unknown."""
    ids = [table.vocab[t] for t in sentence if t in table.vocab]
    if not ids:
        return None
    return table.vectors[ids].mean(axis=0)


def text_sowe(text: str, table: EmbeddingTable) -> np.ndarray | None:
    return sentence_sowe(tokenize(text), table)


@dataclass
class ReviewerVector:
    reviewer_id: str
    semantic: np.ndarray
    nr: float

    @property
    def v(self) -> np.ndarray:
        return np.concatenate([self.semantic, np.array([self.nr], dtype=self.semantic.dtype)])


def negative_ratio(ratings: Sequence[int]) -> float:
    if not ratings:
        raise RepresentationError("no ratings")
    return sum(1 for r in ratings if r in (1, 2)) / len(ratings)


def reviewer_vector(reviews: Sequence[Review], table: EmbeddingTable) -> ReviewerVector:
    if not reviews:
        raise RepresentationError("reviewer has no reviews")
    sowes = []
    for r in reviews:
        for sent in split_sentences(r.text):
            e = sentence_sowe(sent, table)
            if e is not None:
                sowes.append(e)
    if not sowes:
        raise RepresentationError(f"reviewer {reviews[0].reviewer_id} has no usable sentences")
    semantic = np.max(np.stack(sowes), axis=0).astype(DTYPE)
    return ReviewerVector(reviews[0].reviewer_id, semantic, negative_ratio([r.rating for r in reviews]))


def reviewer_matrix(corpus: Corpus, table: EmbeddingTable) -> np.ndarray:
    """``(n_reviewers, F + 1)`` matrix in dense-index order.

    Reviewers without a usable sentence get a zero semantic part.
    """
    by = corpus.by_reviewer()
    out = np.zeros((len(corpus.reviewer_index), table.dim + 1), dtype=DTYPE)
    for rid, idx in corpus.reviewer_index.items():
        try:
            out[idx] = reviewer_vector(by[rid], table).v
        except RepresentationError:
            log.warning("reviewer %s has no usable text; using a zero semantic vector", rid)
            out[idx, -1] = negative_ratio([r.rating for r in by[rid]])
    return out


def windowed_vectors(corpus: Corpus, table: EmbeddingTable, window_of, all_time: np.ndarray) -> dict:
    """Per-(reviewer index, window) vectors built from in-window reviews only.

    ``window_of`` maps a review to its window index. Pairs absent from the
    result fall back to ``all_time``; use :func:`lookup_windowed`.
    """
    buckets: dict[tuple[int, int], list[Review]] = {}
    for r in corpus.reviews:
        buckets.setdefault((corpus.reviewer_index[r.reviewer_id], window_of(r)), []).append(r)
    out = {}
    for key, revs in buckets.items():
        try:
            out[key] = reviewer_vector(revs, table).v
        except RepresentationError:
            continue
    return out


def lookup_windowed(windowed: dict, all_time: np.ndarray, reviewer: int, window: int) -> np.ndarray:
    vec = windowed.get((reviewer, window))
    return all_time[reviewer] if vec is None else vec


def save_reviewer_vectors(ids: Sequence[str], matrix: np.ndarray, path) -> None:
    lines = [VECTORS_HEADER]
    for rid, row in zip(ids, matrix):
        lines.append(rid + "\t" + "\t".join(format(float(x), ".9g") for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_reviewer_vectors(path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != VECTORS_HEADER:
        raise RepresentationError(f"{path}: missing or stale header (expected {VECTORS_HEADER!r})")
    ids, rows = [], []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split("\t")
        ids.append(parts[0])
        rows.append([float(x) for x in parts[1:]])
    return ids, np.array(rows, dtype=DTYPE)
