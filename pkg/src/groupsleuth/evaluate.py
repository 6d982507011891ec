"""Detection metrics, ablation runs, PCA diagnostics and interaction counts."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.metrics import silhouette_score

from .classify import STRATEGIES, GroupVerdict
from .config import PipelineConfig
from .corpus import FRAUD, GENUINE
from .grouping import GroupTimeline
from .pipeline import ABLATIONS, ArtifactSource, classify_groups

log = logging.getLogger(__name__)


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    flags: list[str] = field(default_factory=list)

    COLUMNS = ("precision", "recall", "f1", "tp", "fp", "fn", "tn", "flags")

    def row(self) -> list:
        return [self.precision, self.recall, self.f1, self.tp, self.fp, self.fn, self.tn,
                ",".join(self.flags) or "-"]


def metrics(predicted: Sequence[int], truth: Sequence[int]) -> Metrics:
    """Precision, recall and F1 with fraud as the positive class.

    A zero denominator yields 0 for that metric and a flag naming it.
    """
    if len(predicted) != len(truth):
        raise ValueError("predictions and ground truth differ in length")
    p = np.asarray(predicted) == FRAUD
    t = np.asarray(truth) == FRAUD
    tp = int((p & t).sum())
    fp = int((p & ~t).sum())
    fn = int((~p & t).sum())
    tn = int((~p & ~t).sum())
    flags = []
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        flags.append("precision_undefined")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        flags.append("recall_undefined")
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append("f1_undefined")
    return Metrics(precision, recall, f1, tp, fp, fn, tn, flags)


def verdict_metrics(verdicts: Sequence[GroupVerdict], truth: dict[str, int],
                    only: Sequence[str] | None = None) -> Metrics:
    keep = set(only) if only is not None else None
    chosen = [v for v in verdicts if keep is None or v.group_id in keep]
    missing = [v.group_id for v in chosen if v.group_id not in truth]
    if missing:
        raise KeyError(f"no ground truth for groups: {', '.join(missing[:5])}")
    return metrics([v.label for v in chosen], [truth[v.group_id] for v in chosen])


# ------------------------------------------------------------------ ablations

@dataclass
class AblationRow:
    config: str
    metrics: Metrics
    accessed: list[str]


def run_ablation(config: str, source: ArtifactSource, cfg: PipelineConfig,
                 strategy: str | None = None) -> AblationRow:
    """Train and score one configuration; metrics cover the test split only."""
    if config not in ABLATIONS:
        raise ValueError(f"unknown configuration {config!r}; choose from {', '.join(ABLATIONS)}")
    before = len(source.accessed)
    verdicts, _ = classify_groups(config, source, cfg, strategy)
    groups = source.get("groups")
    _, test_ids = source.get("split")
    truth = {g.group_id: g.label for g in groups}
    return AblationRow(config, verdict_metrics(verdicts, truth, test_ids), source.accessed[before:])


def run_ablations(loaders, cfg: PipelineConfig, configs: Sequence[str] = ABLATIONS) -> list[AblationRow]:
    """Each configuration gets a fresh source so its access log is its own."""
    return [run_ablation(c, ArtifactSource(loaders), cfg) for c in configs]


def compare_strategies(source: ArtifactSource, cfg: PipelineConfig,
                       strategies: Sequence[str] = STRATEGIES) -> dict[str, Metrics]:
    return {s: run_ablation("full", source, cfg, s).metrics for s in strategies}


# ------------------------------------------------------------------------ PCA

@dataclass
class Projection:
    points: np.ndarray
    axes: np.ndarray
    variances: np.ndarray
    flags: list[str] = field(default_factory=list)


def _power_axis(cov: np.ndarray, rng: np.random.Generator, tol: float, max_iter: int) -> tuple[np.ndarray, float]:
    v = rng.normal(size=cov.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return v, 0.0
        w /= norm
        lam = float(w @ cov @ w)
        if np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol:
            v = w
            break
        v = w
    return v, lam


def pca_project(reps, tol: float = 1e-6, max_iter: int = 1000, seed: int = 0) -> Projection:
    """Project onto the top two principal axes found by power iteration with deflation."""
    x = np.asarray(reps, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 points")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    rng = np.random.default_rng(seed)
    flags = []
    axes, lams = [], []
    scale = max(float(np.trace(cov)), 1e-300)
    for k in range(2):
        if k >= x.shape[1]:
            axes.append(np.zeros(x.shape[1]))
            lams.append(0.0)
            flags.append("axis2_zeroed")
            break
        v, lam = _power_axis(cov, rng, tol, max_iter)
        if lam <= 1e-12 * scale:
            if k == 1:
                flags.append("axis2_zeroed")
            else:
                flags.append("zero_variance")
            v = np.zeros(x.shape[1])
            lam = 0.0
        else:
            # Gram-Schmidt against earlier axes keeps the pair orthogonal after round-off
            for a in axes:
                v = v - (v @ a) * a
            v /= np.linalg.norm(v)
            cov = cov - lam * np.outer(v, v)
        if v.any():
            # deterministic sign: largest-magnitude coordinate positive
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
        axes.append(v)
        lams.append(lam)
    a = np.stack(axes)
    return Projection(xc @ a.T, a, np.array(lams), flags)


def silhouette(points, labels) -> float:
    labels = np.asarray(labels)
    if len(set(labels.tolist())) < 2:
        raise ValueError("silhouette needs two labels")
    return float(silhouette_score(np.asarray(points, dtype=np.float64), labels))


# ---------------------------------------------------------------- interactions

def interaction_report(groups: Sequence[GroupTimeline], reviewer_labels: dict[int, int],
                       group_labels: dict[str, int] | None = None) -> list[tuple[int, int, int]]:
    """Per window: genuine reviewers active in fraud groups, fraudsters active in genuine groups.

    A reviewer counts once per (group, window) in which they have at least one
    co-review edge inside the group.
    """
    if not groups:
        return []
    n_windows = max(g.n_windows for g in groups)
    counts = defaultdict(lambda: [0, 0])
    for g in groups:
        label = g.label if group_labels is None else group_labels[g.group_id]
        if label is None:
            raise ValueError(f"group {g.group_id} has no ground truth")
        for w in range(g.n_windows):
            active = np.flatnonzero(g.slices[w].any(axis=1))
            for k in active:
                r = reviewer_labels[g.members[k]]
                if label == FRAUD and r == GENUINE:
                    counts[w][0] += 1
                elif label == GENUINE and r == FRAUD:
                    counts[w][1] += 1
    return [(w, counts[w][0], counts[w][1]) for w in range(n_windows)]
