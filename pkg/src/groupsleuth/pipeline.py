"""Stage functions chaining the modules, independent of any file layout.

Each stage takes in-memory inputs and returns in-memory outputs; the command
line wraps them with artifact persistence. Classification reads its inputs
through an :class:`ArtifactSource` so ablations can prove which upstream
products they touched.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .classify import FcClassifier, GroupVerdict, classify_group, group_seed, group_vector, remove_outliers, train_fc
from .config import PipelineConfig
from .corpus import Corpus, derive_reviewer_labels, split_corpus
from .gcn import GcnModel, GroupGraph, refine_group, train_gcn
from .grouping import GroupTimeline, build_group_timelines, co_review_graphs, label_groups, window_index
from .represent import EmbeddingTable, load_embeddings, lookup_windowed, reviewer_matrix, train_cbow, windowed_vectors
from .spatial import HinRnnModel, Slice, refine_slice, train_hinrnn
from .temporal import TemporalModel, forecast, train_temporal

log = logging.getLogger(__name__)

ABLATIONS = ("spatial", "spatial+temporal", "spatial+temporal+gcn", "full")


# ------------------------------------------------------------ representation

def embed(corpus: Corpus, cfg: PipelineConfig) -> EmbeddingTable:
    if cfg.embeddings_path:
        return load_embeddings(cfg.embeddings_path, dim=None)
    return train_cbow(corpus, dim=cfg.embed_dim, window=cfg.embed_window, batch=cfg.embed_batch,
                      epochs=cfg.embed_epochs, seed=cfg.seed, negatives=cfg.embed_negatives,
                      min_count=cfg.embed_min_count, lr=cfg.embed_lr)


@dataclass
class Representations:
    """Reviewer vectors as fed to the learned stages.

    ``raw`` always holds the unscaled all-time vectors; ``all_time`` and
    ``windowed`` are the model inputs, z-scored when standardisation is on.
    """
    raw: np.ndarray
    all_time: np.ndarray
    windowed: dict
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None

    def at(self, reviewer: int, window: int) -> np.ndarray:
        return lookup_windowed(self.windowed, self.all_time, reviewer, window)


def represent(corpus: Corpus, table: EmbeddingTable, cfg: PipelineConfig,
              raw: np.ndarray | None = None) -> Representations:
    if raw is None:
        raw = reviewer_matrix(corpus, table)
    windowed = windowed_vectors(corpus, table, lambda r: window_index(corpus, r.date, cfg.window_days), raw)
    if not cfg.standardize:
        return Representations(raw, raw, windowed)
    return standardize(raw, windowed)


def standardize(raw: np.ndarray, windowed: dict) -> Representations:
    """Z-score every dimension with statistics of the all-time matrix (labels are never used)."""
    shift = raw.mean(axis=0)
    scale = raw.std(axis=0)
    scale = np.where(scale > 1e-8, scale, 1.0).astype(raw.dtype)

    def z(v):
        return ((v - shift) / scale).astype(raw.dtype)

    return Representations(raw, z(raw), {k: z(v) for k, v in windowed.items()}, shift, scale)


# ------------------------------------------------------------------ grouping

def find_groups(corpus: Corpus, table: EmbeddingTable, cfg: PipelineConfig) -> list[GroupTimeline]:
    graphs = co_review_graphs(corpus, table, cfg.tau, cfg.window_days)
    groups = build_group_timelines(graphs, cfg.m_max)
    if any(r.label is not None for r in corpus.reviews):
        labels = derive_reviewer_labels(corpus, cfg.reviewer_label_threshold)
        label_groups(groups, labels, corpus, cfg.group_label_threshold)
    return groups


def split_groups(groups: list[GroupTimeline], cfg: PipelineConfig) -> tuple[list[str], list[str]]:
    train, test = split_corpus(groups, cfg.train_fraction, cfg.seed)
    return [g.group_id for g in train], [g.group_id for g in test]


def reviewer_label_lookup(corpus: Corpus, cfg: PipelineConfig) -> dict[int, int]:
    return {corpus.reviewer_index[l.reviewer_id]: l.label
            for l in derive_reviewer_labels(corpus, cfg.reviewer_label_threshold)}


# ------------------------------------------------------------------- spatial

def group_slices(group: GroupTimeline, reps: Representations) -> list[tuple[int, Slice]]:
    """Slices from the group's first active window onward, with in-window member vectors."""
    out = []
    for w in range(group.first_active(), group.n_windows):
        vecs = np.stack([reps.at(m, w) for m in group.members])
        out.append((w, Slice(group.slices[w], vecs)))
    return out


def spatial_train(train_groups: list[GroupTimeline], reps: Representations,
                  cfg: PipelineConfig) -> tuple[HinRnnModel, list[float]]:
    slices = [s for g in train_groups for _, s in group_slices(g, reps)]
    model = HinRnnModel(reps.all_time.shape[1], cfg.m_max, cfg.hinrnn_graph_hidden, cfg.hinrnn_edge_hidden,
                        seed=cfg.seed)
    return train_hinrnn(slices, cfg.hinrnn_lr, cfg.hinrnn_epochs, cfg.seed, clip=cfg.clip_norm, model=model)


def spatial_refine(model: HinRnnModel, groups: list[GroupTimeline], reps: Representations,
                   cfg: PipelineConfig) -> list[GroupTimeline]:
    refined = []
    for g in groups:
        slices = np.zeros_like(g.slices)
        for w, s in group_slices(g, reps):
            slices[w] = refine_slice(model, s, cfg.refine_mode)
        refined.append(GroupTimeline(g.group_id, list(g.members), slices, g.label, dict(g.meta)))
    return refined


# ------------------------------------------------------------------ temporal

def temporal_train(refined_train: list[GroupTimeline], cfg: PipelineConfig) -> tuple[TemporalModel, list[float]]:
    return train_temporal(refined_train, cfg.temporal_lr, cfg.temporal_epochs, cfg.seed, cfg.m_max,
                          cfg.temporal_hidden, cfg.clip_norm)


def forecast_groups(model: TemporalModel, refined: list[GroupTimeline]) -> dict[str, np.ndarray]:
    return {g.group_id: forecast(model, g) for g in refined}


# ----------------------------------------------------------------------- gcn

def gcn_graphs(groups: list[GroupTimeline], forecasts: dict[str, np.ndarray], all_time: np.ndarray,
               labels: dict[int, int] | None = None) -> list[GroupGraph]:
    out = []
    for g in groups:
        y = None if labels is None else np.array([labels[m] for m in g.members], dtype=int)
        out.append(GroupGraph(g.group_id, list(g.members), forecasts[g.group_id], all_time[g.members], y))
    return out


def gcn_train(train_groups: list[GroupTimeline], forecasts, all_time, labels,
              cfg: PipelineConfig) -> tuple[GcnModel, list[float]]:
    graphs = gcn_graphs(train_groups, forecasts, all_time, labels)
    return train_gcn(graphs, cfg.gcn_lr, cfg.gcn_epochs, cfg.seed, cfg.gcn_hidden, cfg.clip_norm)


def gcn_refine(model: GcnModel, groups: list[GroupTimeline], forecasts, all_time) -> dict[str, np.ndarray]:
    return {gr.group_id: refine_group(model, gr)[0] for gr in gcn_graphs(groups, forecasts, all_time)}


# ------------------------------------------------------------ classification

class MissingArtifact(LookupError):
    """An upstream product is absent; ``producer`` names the stage that makes it."""

    def __init__(self, what: str, producer: str):
        super().__init__(f"missing artifact: {what} (run {producer})")
        self.what = what
        self.producer = producer


class ArtifactSource:
    """Lazily loaded upstream products with an access log.

    ``loaders`` maps an artifact name to a zero-argument callable. Names used
    here: ``groups``, ``split``, ``vectors``, ``refined``, ``forecast``, ``reps``.
    """

    PRODUCERS = {"groups": "group", "split": "group", "vectors": "embed", "refined": "spatial-refine",
                 "forecast": "forecast", "reps": "gcn-refine"}
    DESCRIPTIONS = {"reps": "refined reps", "refined": "refined slices", "forecast": "forecasts",
                    "vectors": "reviewer vectors", "groups": "groups", "split": "split"}

    def __init__(self, loaders: dict[str, Callable[[], object]]):
        self.loaders = dict(loaders)
        self.accessed: list[str] = []
        self._cache: dict[str, object] = {}

    @classmethod
    def of(cls, **values) -> "ArtifactSource":
        return cls({k: (lambda v=v: v) for k, v in values.items()})

    def get(self, name: str):
        if name not in self._cache:
            if name not in self.loaders:
                raise MissingArtifact(self.DESCRIPTIONS.get(name, name), self.PRODUCERS.get(name, "?"))
            self.accessed.append(name)
            self._cache[name] = self.loaders[name]()
        return self._cache[name]


def _active_members(adj: np.ndarray) -> list[int]:
    keep = [i for i in range(adj.shape[0]) if adj[i].any()]
    return keep or list(range(adj.shape[0]))


def group_features(config: str, group: GroupTimeline, source: ArtifactSource, cfg: PipelineConfig,
                   strategy: str | None = None):
    """Group vector, kept roster positions and clustering outcome for one ablation configuration."""
    if config not in ABLATIONS:
        raise ValueError(f"unknown configuration {config!r}; choose from {', '.join(ABLATIONS)}")
    gid = group.group_id
    if config in ("spatial", "spatial+temporal"):
        vectors = source.get("vectors")
        if config == "spatial":
            refined = {g.group_id: g for g in source.get("refined")}
            adj = refined[gid].union()
        else:
            adj = source.get("forecast")[gid]
        kept = _active_members(adj)
        return group_vector(vectors[[group.members[k] for k in kept]]), kept, None
    reps = source.get("reps")[gid]
    if config == "spatial+temporal+gcn":
        return group_vector(reps), list(range(group.size)), None
    strategy = strategy or cfg.strategy
    adj = source.get("forecast")[gid] if strategy == "min_connection" else None
    kept, outcome = remove_outliers(reps, strategy, adj, group_seed(gid, cfg.seed), cfg.centroid_theta, cfg.gate)
    return group_vector(reps[kept]), kept, outcome


def classify_groups(config: str, source: ArtifactSource, cfg: PipelineConfig,
                    strategy: str | None = None) -> tuple[list[GroupVerdict], FcClassifier]:
    """Train the group classifier on the training split and score every group."""
    groups = source.get("groups")
    train_ids, _ = source.get("split")
    train_ids = set(train_ids)
    feats = {g.group_id: group_features(config, g, source, cfg, strategy) for g in groups}
    train = [g for g in groups if g.group_id in train_ids]
    x = np.stack([feats[g.group_id][0] for g in train])
    y = np.array([g.label for g in train])
    fc, _ = train_fc(x, y, cfg.fc_lr, cfg.fc_epochs, cfg.seed)
    name = (strategy or cfg.strategy) if config == "full" else "none"
    verdicts = []
    for g in groups:
        vec, kept, outcome = feats[g.group_id]
        verdicts.append(classify_group(fc, g.group_id, vec, kept, outcome, name))
    return verdicts, fc

