"""Outlier removal inside groups and the final group classifier.

The default removal path clusters a group's member representations into two
clusters and only acts when the between-cluster spread is large relative to
the group size::

    TSS_i = sum_j (x_ji - mean_i)^2
    WSS_i = sum_m sum_{j in m} (x_ji - mean_mi)^2
    BSS_i = TSS_i - WSS_i
    bss_norm = sqrt(sum_i BSS_i) / n
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .nncore import Adam, Checkpoint, bce, check_finite, sigmoid

log = logging.getLogger(__name__)

GATE = 0.5
STRATEGIES = ("kmeans", "kmedians", "gmm_mahalanobis", "centroid_threshold", "min_connection")
PREFIX = "fc."


@dataclass
class ClusterOutcome:
    assignment: np.ndarray
    centroids: np.ndarray
    tss: np.ndarray
    wss: np.ndarray
    bss: np.ndarray
    bss_norm: float
    mixed: bool
    dominant: int | None  # None means every member is kept
    iterations: int = 0

    @property
    def bss_total(self) -> float:
        return float(self.bss.sum())

    def kept(self) -> list[int]:
        if not self.mixed or self.dominant is None:
            return list(range(len(self.assignment)))
        return [int(i) for i in np.flatnonzero(self.assignment == self.dominant)]


def group_seed(group_id: str, seed: int = 0) -> int:
    return (zlib.crc32(group_id.encode("utf-8")) ^ (seed * 0x9E3779B1)) & 0xFFFFFFFF


def _validate(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] == 0:
        raise ValueError("points must be a non-empty n x d array with d >= 1")
    return x


def split_statistics(x: np.ndarray, assignment: np.ndarray, centers: np.ndarray | None = None,
                     gate: float = GATE) -> ClusterOutcome:
    """Sum-of-squares decomposition for a 2-way split and the mixing decision.

    ``centers`` only labels the outcome; WSS always uses the cluster means.
    """
    n = x.shape[0]
    tss = ((x - x.mean(axis=0)) ** 2).sum(axis=0)
    wss = np.zeros(x.shape[1])
    means = np.zeros((2, x.shape[1]))
    for m in (0, 1):
        part = x[assignment == m]
        if len(part):
            means[m] = part.mean(axis=0)
            wss += ((part - means[m]) ** 2).sum(axis=0)
    bss = tss - wss
    bss_norm = float(np.sqrt(max(bss.sum(), 0.0)) / n)
    sizes = np.bincount(assignment, minlength=2)
    if sizes[0] != sizes[1]:
        dominant = int(np.argmax(sizes))
    else:
        dominant = int(assignment[0])
    return ClusterOutcome(assignment, means if centers is None else centers, tss, wss, bss, bss_norm,
                          bss_norm >= gate, dominant)


def _kpp_init(x: np.ndarray, rng: np.random.Generator, dist) -> np.ndarray:
    first = int(rng.integers(len(x)))
    d = dist(x, x[first][None, :])[:, 0]
    w = d ** 2
    if w.sum() > 0:
        second = int(rng.choice(len(x), p=w / w.sum()))
    else:
        second = (first + 1) % len(x)
    return np.stack([x[first], x[second]])


def _l2(x, c):
    return np.sqrt(((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2))


def _l1(x, c):
    return np.abs(x[:, None, :] - c[None, :, :]).sum(axis=2)


def _two_means(points, seed: int, max_iter: int, gate: float, median: bool) -> ClusterOutcome:
    x = _validate(points)
    n = x.shape[0]
    if n < 2:
        z = np.zeros(x.shape[1])
        return ClusterOutcome(np.zeros(n, dtype=int), x.copy(), z, z.copy(), z.copy(), 0.0, False, None)
    dist = _l1 if median else _l2
    rng = np.random.default_rng(seed)
    centers = _kpp_init(x, rng, dist)
    assignment = None
    it = 0
    for it in range(1, max_iter + 1):
        # argmin returns the first minimum, so ties go to the lower cluster id
        new = np.argmin(dist(x, centers), axis=1)
        if assignment is not None and np.array_equal(new, assignment):
            break
        assignment = new
        for m in (0, 1):
            part = x[assignment == m]
            if len(part):
                centers[m] = np.median(part, axis=0) if median else part.mean(axis=0)
    out = split_statistics(x, assignment, centers.copy(), gate)
    out.iterations = it
    return out


def kmeans2(points, seed: int = 0, max_iter: int = 100, gate: float = GATE) -> ClusterOutcome:
    """Two-cluster Lloyd iterations from a k-means++ start."""
    return _two_means(points, seed, max_iter, gate, median=False)


def kmedians2(points, seed: int = 0, max_iter: int = 100, gate: float = GATE) -> ClusterOutcome:
    """Two-cluster k-medians (L1 assignment, coordinate-wise medians)."""
    return _two_means(points, seed, max_iter, gate, median=True)


def _gmm_keep(x: np.ndarray) -> list[int]:
    mu = x.mean(axis=0)
    var = x.var(axis=0)
    live = var > 1e-12
    if not live.any():
        return list(range(len(x)))
    z2 = ((x[:, live] - mu[live]) ** 2 / var[live]).mean(axis=1)
    return [i for i in range(len(x)) if np.sqrt(z2[i]) <= 1.0]


def _centroid_keep(x: np.ndarray, theta: float) -> list[int]:
    d = np.sqrt(((x - x.mean(axis=0)) ** 2).sum(axis=1))
    mean = d.mean()
    return [i for i in range(len(x)) if d[i] <= theta * mean or mean == 0]


def _min_connection_keep(adjacency: np.ndarray) -> list[int]:
    deg = np.asarray(adjacency).sum(axis=1)
    keep = [i for i in range(len(deg)) if deg[i] != deg.min()]
    return keep if keep else list(range(len(deg)))


def remove_outliers(reps, strategy: str = "kmeans", adjacency: np.ndarray | None = None, seed: int = 0,
                    theta: float = 1.5, gate: float = GATE) -> tuple[list[int], ClusterOutcome | None]:
    """Indices (into ``reps``) of the members kept, plus the clustering outcome when one was computed."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
    x = _validate(reps)
    n = x.shape[0]
    if strategy in ("kmeans", "kmedians"):
        outcome = (kmeans2 if strategy == "kmeans" else kmedians2)(x, seed, gate=gate)
        if n == 2:
            # both candidates tie in size; dropping either would be arbitrary
            return [0, 1], outcome
        return outcome.kept(), outcome
    if n < 2:
        return list(range(n)), None
    if strategy == "gmm_mahalanobis":
        keep = _gmm_keep(x)
    elif strategy == "centroid_threshold":
        keep = _centroid_keep(x, theta)
    else:
        if adjacency is None:
            raise ValueError("min_connection needs the group's adjacency")
        keep = _min_connection_keep(adjacency)
    return (keep or list(range(n))), None


def group_vector(reps) -> np.ndarray:
    x = _validate(reps)
    return x.mean(axis=0)


@dataclass
class FcClassifier:
    """Single affine layer with a logistic output."""
    w: np.ndarray
    b: float = 0.0
    constant: float | None = None  # set when trained on one class only

    def score(self, x) -> np.ndarray | float:
        if self.constant is not None:
            return np.full(np.shape(x)[:-1], self.constant) if np.ndim(x) > 1 else self.constant
        s = sigmoid(np.asarray(x, dtype=np.float64) @ self.w + self.b)
        return float(s) if np.ndim(s) == 0 else s

    def to_checkpoint(self) -> Checkpoint:
        ck = Checkpoint()
        ck[PREFIX + "w"] = self.w.astype(np.float32)
        ck[PREFIX + "b"] = np.array([self.b], dtype=np.float32)
        ck[PREFIX + "constant"] = np.array([-1.0 if self.constant is None else self.constant], dtype=np.float32)
        return ck

    @classmethod
    def from_checkpoint(cls, ck: Checkpoint) -> "FcClassifier":
        w = ck.require(PREFIX + "w").astype(np.float64)
        b = float(ck.require(PREFIX + "b", (1,))[0])
        c = float(ck.require(PREFIX + "constant", (1,))[0])
        return cls(w, b, None if c < 0 else c)


def fc_loss_and_grads(w, b, x, y):
    s = sigmoid(x @ w + b)
    loss = bce(s, y)
    d = (s - y) / len(y)
    return loss, {"w": x.T @ d, "b": np.array([d.sum()])}


def train_fc(x, y, lr: float = 1e-3, epochs: int = 200, seed: int = 0) -> tuple[FcClassifier, list[float]]:
    """Full-batch Adam on mean BCE from zero initialisation.

    ``seed`` is accepted for interface symmetry; zero initialisation and full
    batches make training deterministic without it.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("no training groups")
    classes = set(np.unique(y).tolist())
    if len(classes) < 2:
        only = classes.pop()
        log.warning("training set has a single class (%d); falling back to a majority classifier", only)
        return FcClassifier(np.zeros(x.shape[1]), 0.0, float(only)), []
    params = {"w": np.zeros(x.shape[1]), "b": np.zeros(1)}
    opt = Adam(lr)
    history = []
    for _ in range(epochs):
        loss, grads = fc_loss_and_grads(params["w"], params["b"][0], x, y)
        opt.step(params, grads)
        history.append(loss)
    check_finite(params["w"], "fc weights")
    return FcClassifier(params["w"], float(params["b"][0])), history


@dataclass
class GroupVerdict:
    group_id: str
    kept: list[int]
    vector: np.ndarray
    score: float
    label: int
    bss_norm: float = 0.0
    bss_total: float = 0.0
    mixed: bool = False
    strategy: str = "none"
    extra: dict = field(default_factory=dict)


def classify_group(fc: FcClassifier, group_id: str, vector, kept: Sequence[int] = (),
                   outcome: ClusterOutcome | None = None, strategy: str = "none") -> GroupVerdict:
    score = float(fc.score(np.asarray(vector, dtype=np.float64)))
    return GroupVerdict(
        group_id, list(kept), np.asarray(vector), score, int(score >= 0.5),
        outcome.bss_norm if outcome else 0.0, outcome.bss_total if outcome else 0.0,
        bool(outcome.mixed) if outcome else False, strategy,
    )
