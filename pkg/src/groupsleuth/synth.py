"""Synthetic review corpora with planted fraudster and genuine groups.

Every planted group co-reviews a fresh item with one shared rating inside its
first active window, so the group is connected in that window. Fraud groups
act in a burst of consecutive windows with dense participation; genuine
groups meet sporadically and in smaller subsets.

Two kinds of planted outliers are supported:

* ``outlier_rate``: lone genuine reviewers who once co-review an item with a
  fraud group (same rating, similar wording).
* ``camouflage_rate``: lone fraudsters who join a genuine group's co-reviews
  in one or two windows using genuine-looking text, while the bulk of their
  own reviews are fraud.

In both cases the outlier is listed in the ground truth roster of the group
it touched, and the group label stays that of the planted class.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, fields

import numpy as np

from .corpus import FRAUD, GENUINE, Corpus, Review, TruthGroup


@dataclass
class SynthConfig:
    n_fraud_groups: int = 30
    n_genuine_groups: int = 30
    group_size: tuple[int, int] = (3, 8)
    n_windows: int = 10
    window_len_days: int = 28
    camouflage_rate: float = 0.1
    outlier_rate: float = 0.1
    n_background: int = 20
    solo_reviews: tuple[int, int] = (2, 5)
    n_fraud_words: int = 40
    n_genuine_words: int = 40
    n_common_words: int = 60
    item_words: int = 2
    topic_prob: float = 0.3
    sentence_len: tuple[int, int] = (5, 9)
    sentences_per_review: tuple[int, int] = (2, 4)
    start_date: dt.date = dt.date(2004, 10, 20)

    def validate(self) -> None:
        lo, hi = self.group_size
        if lo < 2 or hi < lo:
            raise ValueError(f"group_size range {self.group_size} invalid (need 2 <= min <= max)")
        if self.n_windows < 1 or self.window_len_days < 1:
            raise ValueError("n_windows and window_len_days must be positive")
        for name in ("camouflage_rate", "outlier_rate", "topic_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.n_fraud_groups < 0 or self.n_genuine_groups < 0 or self.n_background < 0:
            raise ValueError("counts must be non-negative")
        if self.n_fraud_groups + self.n_genuine_groups + self.n_background == 0:
            raise ValueError("config generates no reviewers")
        if self.solo_reviews[0] < 1 or self.solo_reviews[1] < self.solo_reviews[0]:
            raise ValueError("solo_reviews range must start at 1 or more")
        if min(self.n_fraud_words, self.n_genuine_words, self.n_common_words) < 1:
            raise ValueError("word pools must be non-empty")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _words(prefix: str, n: int) -> list[str]:
    syllables = ["ka", "lo", "mi", "ru", "te", "so", "na", "vi", "de", "po", "gu", "ze"]
    out = []
    for i in range(n):
        a, b = divmod(i, len(syllables))
        out.append(f"{prefix}{syllables[b]}{syllables[a % len(syllables)]}{i}")
    return out


class _Builder:
    def __init__(self, cfg: SynthConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.pools = {
            FRAUD: _words("fr", cfg.n_fraud_words),
            GENUINE: _words("gn", cfg.n_genuine_words),
        }
        self.common = _words("cm", cfg.n_common_words)
        self.rows: list[dict] = []
        self.n_items = 0
        self.n_reviewers = 0

    def new_item(self) -> tuple[str, list[str]]:
        self.n_items += 1
        item = f"item{self.n_items:05d}"
        words = [f"it{self.n_items}x{k}" for k in range(self.cfg.item_words)]
        return item, words

    def new_reviewer(self) -> int:
        self.n_reviewers += 1
        return self.n_reviewers - 1

    def text(self, pool: int, item_words: list[str]) -> str:
        cfg, rng = self.cfg, self.rng
        sentences = []
        for _ in range(rng.integers(cfg.sentences_per_review[0], cfg.sentences_per_review[1] + 1)):
            n = rng.integers(cfg.sentence_len[0], cfg.sentence_len[1] + 1)
            words = []
            for _ in range(n):
                u = rng.random()
                if item_words and u < 0.15:
                    words.append(item_words[rng.integers(len(item_words))])
                elif u < 0.15 + cfg.topic_prob * 0.85:
                    words.append(self.pools[pool][rng.integers(len(self.pools[pool]))])
                else:
                    words.append(self.common[rng.integers(len(self.common))])
            sentences.append(" ".join(words))
        punct = [".", "!", "?"]
        return " ".join(s + punct[rng.integers(3)] if i % 2 else s + "." for i, s in enumerate(sentences))

    def day(self, window: int, lo: int = 0, hi: int | None = None) -> int:
        hi = self.cfg.window_len_days - 1 if hi is None else hi
        return window * self.cfg.window_len_days + int(self.rng.integers(lo, hi + 1))

    def add(self, reviewer: int, item: str, rating: int, day: int, label: int, text: str,
            solo: bool = False) -> None:
        self.rows.append(dict(reviewer=reviewer, item=item, rating=rating, day=day, label=label, text=text,
                              solo=solo))

    def genuine_rating(self) -> int:
        return int(self.rng.choice([2, 3, 4, 5], p=[0.1, 0.2, 0.35, 0.35]))

    def fraud_rating(self, promote: bool) -> int:
        return 5 if promote else 1

    def solo(self, reviewer: int, pool: int, n: int, promote: bool | None = None) -> None:
        span = self.cfg.n_windows * self.cfg.window_len_days
        for _ in range(n):
            item, iw = self.new_item()
            if pool == FRAUD:
                rating = self.fraud_rating(bool(self.rng.random() < 0.5) if promote is None else promote)
            else:
                rating = self.genuine_rating()
            self.add(reviewer, item, rating, int(self.rng.integers(span)), pool, self.text(pool, iw), solo=True)

    def n_solo(self) -> int:
        lo, hi = self.cfg.solo_reviews
        return int(self.rng.integers(lo, hi + 1))


def _outlier_count(rng, size: int, rate: float) -> int:
    if rate <= 0:
        return 0
    return min(int(rng.binomial(size, rate)), (size - 1) // 2)


def generate_synthetic(config: SynthConfig, seed: int) -> tuple[Corpus, list[TruthGroup]]:
    """Generate a corpus and its planted ground-truth groups.

    Deterministic for a given ``(config, seed)``.
    """
    config.validate()
    cfg = config
    rng = np.random.default_rng(seed)
    b = _Builder(cfg, rng)
    planted: list[tuple[list[int], int]] = []
    n_w = cfg.n_windows

    for kind in [FRAUD] * cfg.n_fraud_groups + [GENUINE] * cfg.n_genuine_groups:
        size = int(rng.integers(cfg.group_size[0], cfg.group_size[1] + 1))
        members = [b.new_reviewer() for _ in range(size)]
        events: list[tuple[int, str, list[str], int, list[int]]] = []  # window, item, item words, rating, participants
        if kind == FRAUD:
            promote = bool(rng.random() < 0.5)
            length = int(rng.integers(max(1, n_w // 3), n_w + 1))
            start = int(rng.integers(0, n_w - length + 1))
            for k, w in enumerate(range(start, start + length)):
                item, iw = b.new_item()
                part = members if k == 0 else [m for m in members if rng.random() < 0.85]
                if len(part) < 2:
                    part = members
                rating = b.fraud_rating(promote)
                centre = int(rng.integers(3, cfg.window_len_days - 3)) if cfg.window_len_days > 6 else 0
                for m in part:
                    lo = max(0, centre - 3)
                    hi = min(cfg.window_len_days - 1, centre + 3)
                    b.add(m, item, rating, b.day(w, lo, hi), FRAUD, b.text(FRAUD, iw))
                events.append((w, item, iw, rating, part))
            for m in members:
                b.solo(m, FRAUD, b.n_solo(), promote)
        else:
            n_active = int(rng.integers(1, min(4, n_w) + 1))
            windows = sorted(rng.choice(n_w, size=n_active, replace=False).tolist())
            for k, w in enumerate(windows):
                item, iw = b.new_item()
                if k == 0:
                    part = members
                else:
                    sub = int(rng.integers(2, min(3, size) + 1))
                    part = sorted(rng.choice(members, size=sub, replace=False).tolist())
                rating = b.genuine_rating()
                for m in part:
                    b.add(m, item, rating, b.day(w), GENUINE, b.text(GENUINE, iw))
                events.append((w, item, iw, rating, part))
            for m in members:
                b.solo(m, GENUINE, b.n_solo())

        roster = list(members)
        if kind == FRAUD:
            for _ in range(_outlier_count(rng, size, cfg.outlier_rate)):
                o = b.new_reviewer()
                w, item, iw, rating, _part = events[int(rng.integers(len(events)))]
                b.add(o, item, rating, b.day(w), GENUINE, b.text(FRAUD, iw))
                b.solo(o, GENUINE, b.n_solo() + 1)
                roster.append(o)
        else:
            for _ in range(_outlier_count(rng, size, cfg.camouflage_rate)):
                c = b.new_reviewer()
                touched = rng.choice(len(events), size=min(len(events), int(rng.integers(1, 3))), replace=False)
                for e in sorted(touched.tolist()):
                    w, item, iw, rating, _part = events[e]
                    b.add(c, item, rating, b.day(w), GENUINE, b.text(GENUINE, iw))
                b.solo(c, FRAUD, b.n_solo() + len(touched) + 1)
                roster.append(c)
        planted.append((roster, kind))

    for _ in range(cfg.n_background):
        r = b.new_reviewer()
        b.solo(r, GENUINE, b.n_solo())

    # anchor the corpus epoch on the generator's window origin; solo items are private,
    # so moving one of those never changes a co-review
    first = min((i for i, row in enumerate(b.rows) if row["solo"]), key=lambda i: (b.rows[i]["day"], i))
    b.rows[first]["day"] = 0

    perm = rng.permutation(b.n_reviewers)
    rid = [f"u{int(p):05d}" for p in perm]
    reviews = []
    for k, row in enumerate(b.rows):
        reviews.append(Review(
            review_id=f"r{k:06d}",
            reviewer_id=rid[row["reviewer"]],
            item_id=row["item"],
            rating=row["rating"],
            date=cfg.start_date + dt.timedelta(days=row["day"]),
            label=row["label"],
            text=row["text"],
        ))
    truth = [
        TruthGroup(f"pg{gi:03d}", tuple(sorted(rid[m] for m in roster)), kind)
        for gi, (roster, kind) in enumerate(planted)
    ]
    return Corpus(reviews), truth
