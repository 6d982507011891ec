"""Two-layer graph convolution over a group's refined collaboration matrix.

    C_hat = D^-1/2 (C + I) D^-1/2
    H = relu(C_hat V W0)
    Z = softmax(C_hat H W1)

``H`` is the refined reviewer representation used by later stages; ``Z`` is
only needed for the supervised training signal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nncore import DTYPE, Adam, Checkpoint, CheckpointError, check_finite, clip_global_norm, glorot, relu, softmax_rows

log = logging.getLogger(__name__)

PREFIX = "gcn."


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    a = np.asarray(adj, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    a = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


@dataclass
class GroupGraph:
    """One training or inference unit: adjacency, member vectors and optional labels."""
    group_id: str
    members: list[int]
    adjacency: np.ndarray
    vectors: np.ndarray
    labels: np.ndarray | None = None


class GcnModel:
    def __init__(self, in_dim: int = 101, hidden: int = 16, n_classes: int = 2, seed: int = 0, dtype=DTYPE):
        rng = np.random.default_rng(seed)
        self.params = {"w0": glorot(rng, in_dim, hidden, dtype), "w1": glorot(rng, hidden, n_classes, dtype)}
        self.trained = False

    @property
    def dtype(self):
        return self.params["w0"].dtype

    @property
    def in_dim(self) -> int:
        return self.params["w0"].shape[0]

    def astype(self, dtype) -> "GcnModel":
        clone = GcnModel.__new__(GcnModel)
        clone.params = {k: v.astype(dtype) for k, v in self.params.items()}
        clone.trained = self.trained
        return clone

    def forward(self, adj: np.ndarray, vectors: np.ndarray):
        """Return ``(hidden, probs, cache)``."""
        if vectors.shape[1] != self.in_dim:
            raise ValueError(f"expected {self.in_dim}-dim vectors, got {vectors.shape[1]}")
        if vectors.shape[0] != adj.shape[0]:
            raise ValueError("adjacency and vectors disagree on group size")
        c = normalize_adjacency(adj).astype(self.dtype)
        v = np.asarray(vectors, dtype=self.dtype)
        cv = c @ v
        pre = cv @ self.params["w0"]
        h = relu(pre)
        ch = c @ h
        z = softmax_rows(ch @ self.params["w1"])
        return h, z, (c, cv, pre, h, ch, z)

    def loss_and_grads(self, adj, vectors, labels):
        """Summed cross-entropy over labelled members and its gradients."""
        h, z, (c, cv, pre, _, ch, _) = self.forward(adj, vectors)
        y = np.zeros_like(z)
        y[np.arange(len(labels)), labels] = 1
        zc = np.clip(z.astype(np.float64), 1e-12, None)
        loss = float(-(y * np.log(zc)).sum())
        dlogits = z - y
        g1 = ch.T @ dlogits
        dh = c.T @ (dlogits @ self.params["w1"].T)
        dpre = dh * (pre > 0)
        g0 = cv.T @ dpre
        return loss, {"w0": g0, "w1": g1}

    def to_checkpoint(self) -> Checkpoint:
        ck = Checkpoint()
        for k, v in self.params.items():
            ck[PREFIX + k] = v.astype(np.float32)
        return ck

    @classmethod
    def from_checkpoint(cls, ck: Checkpoint) -> "GcnModel":
        w0 = ck.require(PREFIX + "w0")
        in_dim, hidden = w0.shape
        w1 = ck.require(PREFIX + "w1")
        if w1.ndim != 2 or w1.shape[0] != hidden:
            raise CheckpointError(f"tensor {PREFIX}w1 has shape {w1.shape}, expected ({hidden}, k)")
        model = cls(in_dim, hidden, w1.shape[1])
        model.params["w0"][...] = w0
        model.params["w1"][...] = w1
        model.trained = True
        return model


def train_gcn(graphs: Sequence[GroupGraph], lr: float = 1e-5, epochs: int = 100, seed: int = 0,
              hidden: int = 16, clip: float = 5.0) -> tuple[GcnModel, list[float]]:
    """One Adam step per group per epoch, groups visited in a seeded shuffled order.

    History holds the mean per-member loss of each epoch.
    """
    labelled = [g for g in graphs if g.labels is not None and len(g.labels)]
    if not labelled:
        raise ValueError("no labelled groups to train on")
    model = GcnModel(labelled[0].vectors.shape[1], hidden, seed=seed)
    opt = Adam(lr)
    rng = np.random.default_rng(seed)
    n_members = sum(len(g.labels) for g in labelled)
    history = []
    for _ in range(epochs):
        total = 0.0
        for k in rng.permutation(len(labelled)):
            g = labelled[k]
            loss, grads = model.loss_and_grads(g.adjacency, g.vectors, g.labels)
            clip_global_norm(grads, clip)
            opt.step(model.params, grads)
            total += loss
        history.append(total / n_members)
    for k, v in model.params.items():
        check_finite(v, PREFIX + k)
    model.trained = True
    return model, history


def refine_group(model: GcnModel, graph: GroupGraph) -> tuple[np.ndarray, np.ndarray]:
    """Hidden representations ``(n, hidden)`` and class probabilities ``(n, 2)``."""
    h, z, _ = model.forward(graph.adjacency, graph.vectors)
    return h.astype(np.float64), z.astype(np.float64)
