"""HIN-RNN: autoregressive modelling of a group's per-window collaboration graph.

A slice (one group in one window) is serialised under a node ordering into
collaboration vectors ``S_i = (A[1,i], ..., A[i-1,i])``. A graph-level GRU
reads the previous collaboration vector together with the current reviewer's
representation; an edge-level GRU, initialised from the graph state, emits one
Bernoulli probability per edge of the current node.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nncore import (
    DTYPE,
    Adam,
    Checkpoint,
    GruCell,
    Linear,
    check_finite,
    clip_global_norm,
    sigmoid,
)

log = logging.getLogger(__name__)

PREFIX = "hinrnn."


class UntrainedModelError(RuntimeError):
    pass


# ---------------------------------------------------------------- ordering


def order_nodes(adjacency: np.ndarray, strategy: str = "bfs_maxdeg", given: Sequence[int] | None = None) -> list[int]:
    """Node ordering for serialisation.

    ``bfs_maxdeg`` runs breadth-first search from the highest-degree node
    (ties to the lower index), visiting neighbours in index order and
    restarting the same way on each remaining component.
    """
    n = adjacency.shape[0]
    if n == 0:
        raise ValueError("empty roster")
    if strategy == "given":
        if given is None or sorted(given) != list(range(n)):
            raise ValueError("given ordering must be a permutation of the roster")
        return list(given)
    if strategy != "bfs_maxdeg":
        raise ValueError(f"unknown ordering strategy {strategy!r}")
    deg = adjacency.sum(axis=1)
    seen = np.zeros(n, dtype=bool)
    order: list[int] = []
    while len(order) < n:
        rest = np.flatnonzero(~seen)
        start = int(rest[np.argmax(deg[rest])])
        seen[start] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            order.append(v)
            for u in np.flatnonzero(adjacency[v]):
                if not seen[u]:
                    seen[u] = True
                    queue.append(int(u))
    return order


def to_sequence(adjacency: np.ndarray, order: Sequence[int]) -> list[tuple[int, ...]]:
    a = np.asarray(adjacency)
    if a.shape[0] != a.shape[1] or len(order) != a.shape[0]:
        raise ValueError("ordering length does not match adjacency")
    return [tuple(int(a[order[j], order[i]]) for j in range(i)) for i in range(len(order))]


def from_sequence(seq: Sequence[Sequence[int]], order: Sequence[int]) -> np.ndarray:
    n = len(order)
    if len(seq) != n:
        raise ValueError(f"sequence has {len(seq)} entries for {n} nodes")
    a = np.zeros((n, n), dtype=np.uint8)
    for i, s in enumerate(seq):
        if len(s) != i:
            raise ValueError(f"collaboration vector {i} has length {len(s)}, expected {i}")
        for j, bit in enumerate(s):
            a[order[i], order[j]] = a[order[j], order[i]] = int(bit)
    return a


# ------------------------------------------------------------------- model


@dataclass
class Slice:
    """One training/refinement unit: an adjacency plus per-node vectors, both in roster order."""

    adjacency: np.ndarray
    vectors: np.ndarray
    order: list[int] | None = None

    def ordering(self) -> list[int]:
        return self.order if self.order is not None else order_nodes(self.adjacency)


class HinRnnModel:
    def __init__(self, vec_dim: int = 101, m_max: int = 32, graph_hidden: int = 128, edge_hidden: int = 16,
                 seed: int = 0, dtype=DTYPE):
        rng = np.random.default_rng(seed)
        self.vec_dim = vec_dim
        self.m_max = m_max
        self.trained = False
        f1 = GruCell(m_max - 1 + vec_dim, graph_hidden, rng, dtype)
        init = Linear(graph_hidden, edge_hidden, rng, dtype=dtype)
        f2 = GruCell(2, edge_hidden, rng, dtype)
        out = Linear(edge_hidden, 1, rng, dtype=dtype)
        params = {}
        for name, layer in (("f1", f1), ("init", init), ("f2", f2), ("out", out)):
            for k, v in layer.params.items():
                params[f"{name}.{k}"] = v
        self._bind(params)

    def _bind(self, params: dict[str, np.ndarray]) -> None:
        self.params = params

        def view(prefix):
            return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}

        self.f1 = GruCell.from_params(view("f1."))
        self.init = Linear.from_params(view("init."))
        self.f2 = GruCell.from_params(view("f2."))
        self.out = Linear.from_params(view("out."))

    def astype(self, dtype) -> "HinRnnModel":
        clone = HinRnnModel.__new__(HinRnnModel)
        clone.vec_dim, clone.m_max, clone.trained = self.vec_dim, self.m_max, self.trained
        clone._bind({k: v.astype(dtype) for k, v in self.params.items()})
        return clone

    @property
    def dtype(self):
        return self.params["f1.wz"].dtype

    # ---- batching

    def _prepare(self, slices: Sequence[Slice]) -> dict:
        """Pad and batch slices.

        Slices are sorted by size and edge rows by length (both descending) so
        that every recurrent step only touches a prefix of the batch.
        """
        dtype = self.dtype
        sizes = [s.adjacency.shape[0] for s in slices]
        if max(sizes) > self.m_max:
            raise ValueError(f"roster of {max(sizes)} exceeds m_max={self.m_max}")
        for k, s in enumerate(slices):
            if s.vectors.shape != (sizes[k], self.vec_dim):
                raise ValueError(f"slice {k}: vectors shape {s.vectors.shape}, expected {(sizes[k], self.vec_dim)}")
        perm = sorted(range(len(slices)), key=lambda k: (-sizes[k], k))
        b = len(slices)
        n_max = max(sizes)
        width = self.m_max - 1
        ordered = np.zeros((b, n_max, n_max), dtype=dtype)
        x = np.zeros((n_max, b, width + self.vec_dim), dtype=dtype)
        sorted_sizes = [sizes[k] for k in perm]
        for pos, k in enumerate(perm):
            s, n = slices[k], sizes[k]
            pi = s.ordering()
            a = np.asarray(s.adjacency)[np.ix_(pi, pi)]
            ordered[pos, :n, :n] = a
            x[:n, pos, width:] = s.vectors[pi]
            for i in range(2, n):
                # node i sees S_{i-1}: links of node i-1 to nodes before it
                x[i, pos, : i - 1] = a[: i - 1, i - 1]
        rows = sorted(((pos, i) for pos, n in enumerate(sorted_sizes) for i in range(1, n)),
                      key=lambda t: (-t[1], t[0]))
        rows_b = np.array([r[0] for r in rows], dtype=np.int64)
        rows_i = np.array([r[1] for r in rows], dtype=np.int64)
        length = max(n_max - 1, 1)
        targets = np.zeros((len(rows), length), dtype=dtype)
        mask = np.zeros((len(rows), length), dtype=dtype)
        for r, (pos, i) in enumerate(rows):
            targets[r, :i] = ordered[pos, :i, i]
            mask[r, :i] = 1
        sizes_arr = np.array(sorted_sizes)
        return dict(
            x=x, rows_b=rows_b, rows_i=rows_i, targets=targets, mask=mask, perm=perm,
            node_active=[int((sizes_arr > i).sum()) for i in range(n_max)],
            row_active=[int((rows_i > j).sum()) for j in range(length)],
        )

    def _edge_inputs(self, prev_bits: np.ndarray, first: bool) -> np.ndarray:
        e = np.zeros((prev_bits.shape[0], 2), dtype=self.dtype)
        e[:, 0] = prev_bits
        e[:, 1] = 1.0 if first else 0.0
        return e

    def _forward(self, slices: Sequence[Slice], prepared: dict | None = None):
        st = dict(prepared if prepared is not None else self._prepare(slices))
        x, rows_b, rows_i, targets = st["x"], st["rows_b"], st["rows_i"], st["targets"]
        n_max, b = x.shape[0], x.shape[1]
        hidden = self.f1.hidden_dim
        hs = np.zeros((n_max, b, hidden), dtype=self.dtype)
        h = np.zeros((b, hidden), dtype=self.dtype)
        g_caches = []
        for i in range(n_max):
            a = st["node_active"][i]
            h, cache = self.f1.step(h[:a], x[i, :a])
            hs[i, :a] = h
            g_caches.append(cache)
        h_rows = hs[rows_i, rows_b]
        g0 = np.tanh(self.init.forward(h_rows))
        g = g0
        probs = np.zeros(targets.shape, dtype=self.dtype)
        e_caches, outs = [], []
        for j in range(targets.shape[1]):
            a = st["row_active"][j]
            if a == 0:
                break
            prev = targets[:a, j - 1] if j > 0 else np.zeros(a, dtype=self.dtype)
            g, cache = self.f2.step(g[:a], self._edge_inputs(prev, j == 0))
            probs[:a, j] = sigmoid(self.out.forward(g)[:, 0])
            e_caches.append(cache)
            outs.append(g)
        st.update(g_caches=g_caches, h_rows=h_rows, g0=g0, e_caches=e_caches, outs=outs, n_max=n_max, b=b)
        return probs, st

    def loss_and_grads(self, slices: Sequence[Slice], prepared: dict | None = None):
        """Mean edge BCE over all slices and its gradient for every parameter.

        ``prepared`` may carry the output of :meth:`_prepare` for ``slices`` so
        repeated epochs skip re-batching.
        """
        probs, st = self._forward(slices, prepared)
        targets, mask = st["targets"], st["mask"]
        count = max(float(mask.sum()), 1.0)
        p = np.clip(probs.astype(np.float64), 1e-7, 1 - 1e-7)
        loss = float(-(mask * (targets * np.log(p) + (1 - targets) * np.log(1 - p))).sum() / count)
        dlogit = ((probs - targets) * mask / count).astype(self.dtype)

        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        g_f2 = {k: grads["f2." + k] for k in self.f2.params}
        dg = np.zeros_like(st["g0"])
        for j in reversed(range(len(st["e_caches"]))):
            a = st["row_active"][j]
            dl = dlogit[:a, j: j + 1]
            grads["out.w"] += st["outs"][j].T @ dl
            grads["out.b"] += dl.sum(axis=0)
            d = dg[:a] + dl @ self.out.params["w"].T
            dg[:a], _ = self.f2.backward(d, st["e_caches"][j], g_f2)
        dpre0 = dg * (1 - st["g0"] ** 2)
        dh_rows, g_init = self.init.backward(st["h_rows"], dpre0)
        grads["init.w"] += g_init["w"]
        grads["init.b"] += g_init["b"]

        dh_all = np.zeros((st["n_max"], st["b"], self.f1.hidden_dim), dtype=self.dtype)
        np.add.at(dh_all, (st["rows_i"], st["rows_b"]), dh_rows)
        g_f1 = {k: grads["f1." + k] for k in self.f1.params}
        carry = np.zeros((st["b"], self.f1.hidden_dim), dtype=self.dtype)
        for i in reversed(range(st["n_max"])):
            a = st["node_active"][i]
            carry[:a], _ = self.f1.backward(carry[:a] + dh_all[i, :a], st["g_caches"][i], g_f1)
        return loss, grads

    # ---- inference

    def edge_probabilities(self, s: Slice) -> np.ndarray:
        """Teacher-forced edge probabilities, as an upper-triangular matrix in ordered positions."""
        probs, st = self._forward([s])
        n = s.adjacency.shape[0]
        out = np.zeros((n, n), dtype=np.float64)
        for r, i in enumerate(st["rows_i"]):
            out[:i, i] = probs[r, :i]
        return out

    def log_likelihood(self, s: Slice) -> float:
        """Joint log-likelihood of the slice under its ordering, via the batched edge pass."""
        p = self.edge_probabilities(s)
        pi = s.ordering()
        a = np.asarray(s.adjacency)[np.ix_(pi, pi)]
        iu = np.triu_indices(a.shape[0], 1)
        return float(np.sum(np.log(np.where(a[iu] > 0, p[iu], 1.0 - p[iu]))))

    def node_conditionals(self, s: Slice) -> list[float]:
        """``log p(S_i | S_<i)`` for each node, computed one node at a time."""
        pi = s.ordering()
        a = np.asarray(s.adjacency)[np.ix_(pi, pi)].astype(self.dtype)
        v = s.vectors[pi].astype(self.dtype)
        n = a.shape[0]
        width = self.m_max - 1
        h = np.zeros((1, self.f1.hidden_dim), dtype=self.dtype)
        out = []
        for i in range(n):
            x = np.zeros((1, width + self.vec_dim), dtype=self.dtype)
            if i >= 2:
                x[0, : i - 1] = a[: i - 1, i - 1]
            x[0, width:] = v[i]
            h, _ = self.f1.step(h, x)
            total = 0.0
            if i >= 1:
                g = np.tanh(self.init.forward(h))
                prev = 0.0
                for j in range(i):
                    g, _ = self.f2.step(g, self._edge_inputs(np.array([prev], dtype=self.dtype), j == 0))
                    p = float(sigmoid(self.out.forward(g))[0, 0])
                    bit = a[j, i]
                    total += np.log(p) if bit > 0 else np.log1p(-p)
                    prev = bit
            out.append(total)
        return out

    def generate(self, vectors: np.ndarray, order: Sequence[int]) -> np.ndarray:
        """Greedy free-running generation (each edge fed back at the 0.5 threshold)."""
        n = len(order)
        a = np.zeros((n, n), dtype=np.uint8)
        width = self.m_max - 1
        v = vectors[list(order)].astype(self.dtype)
        h = np.zeros((1, self.f1.hidden_dim), dtype=self.dtype)
        for i in range(n):
            x = np.zeros((1, width + self.vec_dim), dtype=self.dtype)
            if i >= 2:
                x[0, : i - 1] = a[: i - 1, i - 1]
            x[0, width:] = v[i]
            h, _ = self.f1.step(h, x)
            if i == 0:
                continue
            g = np.tanh(self.init.forward(h))
            prev = 0.0
            for j in range(i):
                g, _ = self.f2.step(g, self._edge_inputs(np.array([prev], dtype=self.dtype), j == 0))
                bit = 1 if float(sigmoid(self.out.forward(g))[0, 0]) >= 0.5 else 0
                a[j, i] = a[i, j] = bit
                prev = float(bit)
        out = np.zeros_like(a)
        out[np.ix_(list(order), list(order))] = a
        return out

    # ---- persistence

    def to_checkpoint(self) -> Checkpoint:
        ck = Checkpoint()
        ck[PREFIX + "dims"] = np.array([self.m_max, self.vec_dim, self.f1.hidden_dim, self.f2.hidden_dim],
                                       dtype=np.float32)
        for k, v in self.params.items():
            ck[PREFIX + k] = v.astype(np.float32)
        return ck

    @classmethod
    def from_checkpoint(cls, ck: Checkpoint) -> "HinRnnModel":
        dims = ck.require(PREFIX + "dims", (4,)).astype(int)
        m_max, vec_dim, h1, h2 = (int(d) for d in dims)
        model = cls(vec_dim, m_max, h1, h2)
        for k, v in model.params.items():
            v[...] = ck.require(PREFIX + k, v.shape)
        model.trained = True
        return model


def train_hinrnn(slices: Sequence[Slice], lr: float = 0.003, epochs: int = 3000, seed: int = 0,
                 vec_dim: int = 101, m_max: int = 32, clip: float = 5.0,
                 model: HinRnnModel | None = None) -> tuple[HinRnnModel, list[float]]:
    """Full-batch teacher-forced training with Adam; returns the model and per-epoch losses."""
    trainable = [s for s in slices if s.adjacency.shape[0] >= 2]
    if not trainable:
        raise ValueError("no trainable slices (need at least one slice with 2 or more members)")
    if model is None:
        model = HinRnnModel(vec_dim, m_max, seed=seed)
    opt = Adam(lr)
    # fix orderings once; they depend only on the observed slices
    fixed = [Slice(s.adjacency, s.vectors.astype(model.dtype), s.ordering()) for s in trainable]
    prepared = model._prepare(fixed)
    history = []
    for epoch in range(epochs):
        loss, grads = model.loss_and_grads(fixed, prepared)
        clip_global_norm(grads, clip)
        opt.step(model.params, grads)
        history.append(loss)
        if epoch % 500 == 0:
            log.debug("hinrnn epoch %d loss %.5f", epoch, loss)
    for k, v in model.params.items():
        check_finite(v, PREFIX + k)
    model.trained = True
    return model, history


def refine_slice(model: HinRnnModel, s: Slice, mode: str = "teacher") -> np.ndarray:
    """Refined adjacency in roster order.

    ``teacher`` scores every edge conditioned on the observed preceding edges
    of the slice; ``generate`` decodes greedily from the reviewer vectors
    alone. Either way an edge is kept iff its probability is at least 0.5.
    """
    if not model.trained:
        raise UntrainedModelError("HIN-RNN model has not been trained")
    n = s.adjacency.shape[0]
    if n > model.m_max:
        raise ValueError(f"roster of {n} exceeds m_max={model.m_max}")
    if n < 2:
        return np.zeros((n, n), dtype=np.uint8)
    pi = s.ordering()
    if mode == "generate":
        return model.generate(s.vectors, pi)
    if mode != "teacher":
        raise ValueError(f"unknown refinement mode {mode!r}")
    p = model.edge_probabilities(Slice(s.adjacency, s.vectors.astype(model.dtype), pi))
    ordered = np.triu((p >= 0.5).astype(np.uint8), 1)
    ordered = ordered | ordered.T
    out = np.zeros((n, n), dtype=np.uint8)
    out[np.ix_(pi, pi)] = ordered
    return out
