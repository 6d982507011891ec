"""Time windows, per-window co-review graphs and candidate groups."""
from __future__ import annotations

import datetime as dt
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .artifacts import read_tsv, write_tsv
from .corpus import FRAUD, GENUINE, Corpus, ReviewerLabel
from .represent import EmbeddingTable, cosine, text_sowe

WINDOW_DAYS = 28


@dataclass(frozen=True)
class TimeWindow:
    index: int
    start_date: dt.date
    end_date: dt.date


def window_index(corpus: Corpus, date: dt.date, days: int = WINDOW_DAYS) -> int:
    return (date - corpus.epoch).days // days


def assign_windows(corpus: Corpus, days: int = WINDOW_DAYS) -> list[TimeWindow]:
    last = max(window_index(corpus, r.date, days) for r in corpus.reviews)
    return [
        TimeWindow(i, corpus.epoch + dt.timedelta(days=i * days), corpus.epoch + dt.timedelta(days=i * days + days - 1))
        for i in range(last + 1)
    ]


@dataclass
class CoReviewGraph:
    window: TimeWindow
    members: list[int]
    adjacency: np.ndarray

    @property
    def edges(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(np.triu(self.adjacency, 1))
        return [(self.members[i], self.members[j]) for i, j in zip(ii, jj)]


def _graph_from_edges(window: TimeWindow, edges: set[tuple[int, int]]) -> CoReviewGraph:
    members = sorted({v for e in edges for v in e})
    pos = {m: k for k, m in enumerate(members)}
    adj = np.zeros((len(members), len(members)), dtype=np.uint8)
    for a, b in edges:
        adj[pos[a], pos[b]] = adj[pos[b], pos[a]] = 1
    return CoReviewGraph(window, members, adj)


def co_review_edges(corpus: Corpus, window: TimeWindow, table: EmbeddingTable, tau: float = 0.7,
                    days: int = WINDOW_DAYS, _sowe_cache: dict | None = None) -> CoReviewGraph:
    """Edges between reviewers who rated a shared item identically, with similar text, in ``window``."""
    if not -1.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [-1, 1]")
    cache = {} if _sowe_cache is None else _sowe_cache
    by_item = defaultdict(list)
    for r in corpus.reviews:
        if window_index(corpus, r.date, days) == window.index:
            by_item[r.item_id].append(r)
    edges: set[tuple[int, int]] = set()
    for item in sorted(by_item):
        revs = by_item[item]
        for a, b in combinations(revs, 2):
            if a.rating != b.rating or a.reviewer_id == b.reviewer_id:
                continue
            ia, ib = corpus.reviewer_index[a.reviewer_id], corpus.reviewer_index[b.reviewer_id]
            key = (min(ia, ib), max(ia, ib))
            if key in edges:
                continue
            ea = _cached_sowe(a, table, cache)
            eb = _cached_sowe(b, table, cache)
            if ea is None or eb is None:
                continue
            if cosine(ea, eb) >= tau:
                edges.add(key)
    return _graph_from_edges(window, edges)


def _cached_sowe(review, table, cache):
    if review.review_id not in cache:
        cache[review.review_id] = text_sowe(review.text, table)
    return cache[review.review_id]


def co_review_graphs(corpus: Corpus, table: EmbeddingTable, tau: float = 0.7,
                     days: int = WINDOW_DAYS) -> list[CoReviewGraph]:
    cache: dict = {}
    return [co_review_edges(corpus, w, table, tau, days, cache) for w in assign_windows(corpus, days)]


@dataclass
class GroupTimeline:
    group_id: str
    members: list[int]
    slices: np.ndarray  # (n_windows, n, n) uint8, roster order
    label: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def n_windows(self) -> int:
        return self.slices.shape[0]

    def active_windows(self) -> list[int]:
        return [w for w in range(self.n_windows) if self.slices[w].any()]

    def first_active(self) -> int:
        act = self.active_windows()
        return act[0] if act else 0

    def union(self) -> np.ndarray:
        return (self.slices.max(axis=0) if self.n_windows else np.zeros((self.size, self.size))).astype(np.uint8)


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller index becomes the root so results do not depend on edge order
            lo, hi = min(ra, rb), max(ra, rb)
            self.parent[hi] = lo


def _components(nodes: Sequence[int], edges: Sequence[tuple[int, int]]) -> list[list[int]]:
    uf = _UnionFind()
    for v in nodes:
        uf.find(v)
    for a, b in edges:
        uf.union(a, b)
    comps: dict[int, list[int]] = defaultdict(list)
    for v in nodes:
        comps[uf.find(v)].append(v)
    return sorted((sorted(c) for c in comps.values()), key=lambda c: c[0])


def build_group_timelines(graphs: Sequence[CoReviewGraph], m_max: int = 32) -> list[GroupTimeline]:
    """Connected components of the union graph, with per-window slices over each roster.

    Rosters above ``m_max`` keep the ``m_max`` members of highest union degree
    (ties to the lower dense index); components are then recomputed on the
    kept members and the largest one retained.
    """
    if not graphs:
        raise ValueError("need at least one window")
    union_edges = sorted({e for g in graphs for e in g.edges})
    nodes = sorted({v for e in union_edges for v in e})
    degree: dict[int, int] = defaultdict(int)
    for a, b in union_edges:
        degree[a] += 1
        degree[b] += 1
    per_window = [set(g.edges) for g in graphs]
    groups = []
    for comp in _components(nodes, union_edges):
        if len(comp) < 2:
            continue
        roster = comp
        if len(roster) > m_max:
            kept = sorted(sorted(roster, key=lambda v: (-degree[v], v))[:m_max])
            kept_set = set(kept)
            sub_edges = [e for e in union_edges if e[0] in kept_set and e[1] in kept_set]
            subs = [c for c in _components(kept, sub_edges) if len(c) >= 2]
            if not subs:
                continue
            roster = max(subs, key=lambda c: (len(c), -c[0]))
        pos = {m: k for k, m in enumerate(roster)}
        slices = np.zeros((len(graphs), len(roster), len(roster)), dtype=np.uint8)
        for w, edges in enumerate(per_window):
            for a, b in edges:
                if a in pos and b in pos:
                    slices[w, pos[a], pos[b]] = slices[w, pos[b], pos[a]] = 1
        groups.append(GroupTimeline(f"g{len(groups):04d}", roster, slices))
    return groups


def label_groups(groups: Sequence[GroupTimeline], reviewer_labels: Sequence[ReviewerLabel],
                 corpus: Corpus, threshold: float = 0.5) -> None:
    """Set ``group.label`` to fraud iff the share of fraudster members exceeds ``threshold``."""
    by_idx = {corpus.reviewer_index[l.reviewer_id]: l.label for l in reviewer_labels}
    for g in groups:
        frac = float(np.mean([by_idx[m] == FRAUD for m in g.members]))
        g.label = FRAUD if frac > threshold else GENUINE


def write_groups(groups: Sequence[GroupTimeline], corpus: Corpus, edges_path, rosters_path,
                 refined: bool = False) -> None:
    ids = corpus.reviewer_ids
    write_tsv(
        rosters_path, "rosters",
        ([g.group_id, ",".join(ids[m] for m in g.members), "" if g.label is None else g.label] for g in groups),
        columns=["group_id", "members", "label"],
        meta={"n_windows": groups[0].n_windows if groups else 0},
    )
    rows = []
    for g in groups:
        for w in range(g.n_windows):
            ii, jj = np.nonzero(np.triu(g.slices[w], 1))
            for i, j in zip(ii, jj):
                row = [g.group_id, w, ids[g.members[i]], ids[g.members[j]]]
                if refined:
                    row.append(1)
                rows.append(row)
    cols = ["group_id", "window", "member_a", "member_b"] + (["refined"] if refined else [])
    write_tsv(edges_path, "refined-edges" if refined else "edges", rows, columns=cols)


def read_groups(corpus: Corpus, edges_path, rosters_path, refined: bool = False) -> list[GroupTimeline]:
    roster_rows, meta = read_tsv(rosters_path, "rosters")
    n_windows = int(meta["n_windows"])
    idx = corpus.reviewer_index
    groups = {}
    for gid, members, label in roster_rows:
        mem = [idx[m] for m in members.split(",")]
        groups[gid] = GroupTimeline(gid, mem, np.zeros((n_windows, len(mem), len(mem)), dtype=np.uint8),
                                    None if label == "" else int(label))
    edge_rows, _ = read_tsv(edges_path, "refined-edges" if refined else "edges")
    for row in edge_rows:
        g = groups[row[0]]
        pos = {m: k for k, m in enumerate(g.members)}
        a, b = pos[idx[row[2]]], pos[idx[row[3]]]
        g.slices[int(row[1]), a, b] = g.slices[int(row[1]), b, a] = 1
    return list(groups.values())
