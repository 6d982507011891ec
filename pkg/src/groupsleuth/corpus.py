"""Review data model, TSV ingestion and group-level train/test splitting."""
from __future__ import annotations

import datetime as dt
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

CORPUS_HEADER = "#groupsleuth-corpus v1"
TRUTH_HEADER = "#groupsleuth-truth v1"

GENUINE = 0
FRAUD = 1
LABEL_NAMES = {GENUINE: "genuine", FRAUD: "fraud"}
REVIEWER_LABEL_NAMES = {GENUINE: "genuine", FRAUD: "fraudster"}


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Review:
    review_id: str
    reviewer_id: str
    item_id: str
    rating: int
    date: dt.date
    label: int
    text: str

    def __post_init__(self):
        if not 1 <= self.rating <= 5:
            raise ValueError(f"rating {self.rating} outside 1..5")
        if self.label not in (GENUINE, FRAUD):
            raise ValueError(f"label {self.label} is not 0 or 1")
        if not self.text.strip():
            raise ValueError("empty review text")


@dataclass
class Corpus:
    reviews: list[Review]
    epoch: dt.date = field(init=False)
    reviewer_index: dict[str, int] = field(init=False)
    item_index: dict[str, int] = field(init=False)

    def __post_init__(self):
        if not self.reviews:
            raise CorpusError("empty corpus")
        self.epoch = min(r.date for r in self.reviews)
        self.reviewer_index = {rid: i for i, rid in enumerate(sorted({r.reviewer_id for r in self.reviews}))}
        self.item_index = {iid: i for i, iid in enumerate(sorted({r.item_id for r in self.reviews}))}

    @property
    def reviewer_ids(self) -> list[str]:
        return list(self.reviewer_index)

    def by_reviewer(self) -> dict[str, list[Review]]:
        out: dict[str, list[Review]] = defaultdict(list)
        for r in self.reviews:
            out[r.reviewer_id].append(r)
        return dict(out)


@dataclass(frozen=True)
class ReviewerLabel:
    reviewer_id: str
    label: int
    fraud_fraction: float


def escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def unescape(text: str) -> str:
    out = []
    it = iter(text)
    for ch in it:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(it, "")
        out.append({"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}.get(nxt, "\\" + nxt))
    return "".join(out)


def _parse_row(fields: list[str]) -> Review:
    if len(fields) != 7:
        raise ValueError(f"expected 7 fields, got {len(fields)}")
    review_id, reviewer_id, item_id, rating, date, label, text = fields
    return Review(
        review_id=review_id,
        reviewer_id=reviewer_id,
        item_id=item_id,
        rating=int(rating),
        date=dt.date.fromisoformat(date),
        label=int(label),
        text=unescape(text),
    )


def load_corpus(path, format: str = "tsv") -> Corpus:
    """Read an escaped 7-column TSV corpus.

    The ``#groupsleuth-corpus v1`` header is optional; any other ``#groupsleuth-corpus``
    version is rejected. Invalid rows are collected and reported together.
    """
    if format != "tsv":
        raise CorpusError(f"unsupported corpus format {format!r}")
    try:
        lines = Path(path).read_text(encoding="utf-8").split("\n")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    reviews = []
    bad: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("#groupsleuth-corpus") and line != CORPUS_HEADER:
                raise CorpusError(f"unsupported corpus version {line!r} (expected {CORPUS_HEADER!r})")
            continue
        try:
            reviews.append(_parse_row(line.split("\t")))
        except ValueError as exc:
            bad.append((lineno, str(exc)))
    if bad:
        shown = ", ".join(f"line {n} ({msg})" for n, msg in bad[:10])
        raise CorpusError(f"{len(bad)} malformed record(s): {shown}")
    if not reviews:
        raise CorpusError(f"empty corpus: {path}")
    return Corpus(reviews)


def sort_key(r: Review):
    return (r.date, r.reviewer_id, r.item_id, r.review_id)


def format_corpus(corpus: Corpus) -> str:
    rows = [CORPUS_HEADER]
    for r in sorted(corpus.reviews, key=sort_key):
        rows.append("\t".join([
            r.review_id, r.reviewer_id, r.item_id, str(r.rating), r.date.isoformat(), str(r.label), escape(r.text),
        ]))
    return "\n".join(rows) + "\n"


def write_corpus(corpus: Corpus, path) -> None:
    Path(path).write_text(format_corpus(corpus), encoding="utf-8")


def derive_reviewer_labels(corpus: Corpus, threshold: float = 0.5) -> list[ReviewerLabel]:
    """Reviewer is a fraudster iff the fraction of their fraud-labelled reviews exceeds ``threshold``."""
    counts: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for r in corpus.reviews:
        counts[r.reviewer_id][0] += r.label
        counts[r.reviewer_id][1] += 1
    out = []
    for rid in corpus.reviewer_index:
        fraud, total = counts[rid]
        frac = fraud / total
        out.append(ReviewerLabel(rid, FRAUD if frac > threshold else GENUINE, frac))
    return out


def split_corpus(groups: Sequence, train_fraction: float = 0.8, seed: int = 0):
    """Stratified group-level split; returns ``(train, test)`` lists.

    Each element of ``groups`` must expose an integer ``label``. Within each
    class the groups are shuffled with ``seed`` and the first
    ``round(train_fraction * n_class)`` go to training; the rounding residue is
    then balanced so the overall train count stays within one group of target.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    if len(groups) < 2:
        raise ValueError("need at least 2 groups to split")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = defaultdict(list)
    for i, g in enumerate(groups):
        by_class[int(g.label)].append(i)
    target = round(train_fraction * len(groups))
    train_idx: list[int] = []
    leftovers: list[int] = []
    for label in sorted(by_class):
        idx = list(by_class[label])
        rng.shuffle(idx)
        k = int(np.floor(train_fraction * len(idx)))
        train_idx.extend(idx[:k])
        leftovers.extend(idx[k:])
    # top up from the remainders, largest class remainder first via shuffled order
    rng.shuffle(leftovers)
    need = max(0, target - len(train_idx))
    need = min(need, len(leftovers) - 1) if len(leftovers) > 1 else 0
    train_idx.extend(leftovers[:need])
    train_set = set(train_idx)
    if not train_set or len(train_set) == len(groups):
        raise ValueError("split left one side empty")
    train = [g for i, g in enumerate(groups) if i in train_set]
    test = [g for i, g in enumerate(groups) if i not in train_set]
    return train, test


@dataclass(frozen=True)
class TruthGroup:
    group_id: str
    members: tuple[str, ...]
    label: int


def write_truth(groups: Iterable[TruthGroup], path) -> None:
    rows = [TRUTH_HEADER]
    for g in groups:
        rows.append(f"{g.group_id}\t{','.join(g.members)}\t{LABEL_NAMES[g.label]}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_truth(path) -> list[TruthGroup]:
    names = {v: k for k, v in LABEL_NAMES.items()}
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        if line.startswith("#"):
            if line != TRUTH_HEADER:
                raise CorpusError(f"unsupported truth header {line!r}")
            continue
        gid, members, label = line.split("\t")
        if label not in names:
            raise CorpusError(f"line {lineno}: unknown group label {label!r}")
        out.append(TruthGroup(gid, tuple(members.split(",")), names[label]))
    return out
