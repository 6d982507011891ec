"""Recurrent forecaster over a group's sequence of collaboration matrices.

    h_t = sigmoid(h_{t-1} W_h + vec(C_t) W_C + b)
    P(C_{t+1}) = (tanh(h_t W_o + b_o) + 1) / 2

Matrices are placed in the top-left block of an ``m_max x m_max`` grid and
flattened row-major. Only the strict upper triangle of the roster block
contributes to the loss.
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .grouping import GroupTimeline
from .nncore import DTYPE, Adam, Checkpoint, check_finite, clip_global_norm, glorot, sigmoid

log = logging.getLogger(__name__)

PREFIX = "temporal."


class TemporalModel:
    def __init__(self, m_max: int = 32, hidden: int = 64, seed: int = 0, dtype=DTYPE):
        rng = np.random.default_rng(seed)
        self.m_max = m_max
        self.hidden = hidden
        self.trained = False
        size = m_max * m_max
        self.params = {
            "w_h": glorot(rng, hidden, hidden, dtype),
            "w_c": glorot(rng, size, hidden, dtype),
            "b": np.zeros(hidden, dtype=dtype),
            # zero head: untrained forecasts sit exactly at 0.5
            "w_o": np.zeros((hidden, size), dtype=dtype),
            "b_o": np.zeros(size, dtype=dtype),
        }

    @property
    def dtype(self):
        return self.params["w_h"].dtype

    def astype(self, dtype) -> "TemporalModel":
        clone = TemporalModel.__new__(TemporalModel)
        clone.m_max, clone.hidden, clone.trained = self.m_max, self.hidden, self.trained
        clone.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return clone

    def pad(self, matrix: np.ndarray) -> np.ndarray:
        n = matrix.shape[0]
        if n > self.m_max:
            raise ValueError(f"roster of {n} exceeds m_max={self.m_max}")
        out = np.zeros((self.m_max, self.m_max), dtype=self.dtype)
        out[:n, :n] = matrix
        return out.reshape(-1)

    def loss_mask(self, n: int) -> np.ndarray:
        m = np.zeros((self.m_max, self.m_max), dtype=self.dtype)
        m[:n, :n] = np.triu(np.ones((n, n)), 1)
        return m.reshape(-1)

    def run(self, inputs: np.ndarray):
        """Hidden states for ``inputs`` of shape ``(T, B, m_max**2)``."""
        p = self.params
        t_len, b = inputs.shape[0], inputs.shape[1]
        h = np.zeros((b, self.hidden), dtype=self.dtype)
        hs = []
        for t in range(t_len):
            h = sigmoid(h @ p["w_h"] + inputs[t] @ p["w_c"] + p["b"])
            hs.append(h)
        return np.stack(hs)

    def head(self, h: np.ndarray) -> np.ndarray:
        return (np.tanh(h @ self.params["w_o"] + self.params["b_o"]) + 1) / 2

    def loss_and_grads(self, inputs, targets, mask):
        """Masked mean BCE of next-step predictions.

        ``inputs``, ``targets`` and ``mask`` are ``(T, B, m_max**2)``; step ``t``
        predicts ``targets[t]`` from the hidden state after ``inputs[t]``.
        """
        p = self.params
        hs = self.run(inputs)
        a = hs @ p["w_o"] + p["b_o"]
        y = np.tanh(a)
        prob = (y + 1) / 2
        count = max(float(mask.sum()), 1.0)
        pc = np.clip(prob.astype(np.float64), 1e-7, 1 - 1e-7)
        loss = float(-(mask * (targets * np.log(pc) + (1 - targets) * np.log(1 - pc))).sum() / count)
        # d/da of BCE((tanh a + 1)/2) simplifies to 2 * (prob - target)
        da = (2 * (prob - targets) * mask / count).astype(self.dtype)
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        t_len, b = inputs.shape[0], inputs.shape[1]
        grads["w_o"] = np.einsum("tbh,tbo->ho", hs, da)
        grads["b_o"] = da.sum(axis=(0, 1))
        dh_out = da @ p["w_o"].T
        carry = np.zeros((b, self.hidden), dtype=self.dtype)
        for t in reversed(range(t_len)):
            dh = carry + dh_out[t]
            h = hs[t]
            dpre = dh * h * (1 - h)
            h_prev = hs[t - 1] if t > 0 else np.zeros_like(h)
            grads["w_h"] += h_prev.T @ dpre
            grads["w_c"] += inputs[t].T @ dpre
            grads["b"] += dpre.sum(axis=0)
            carry = dpre @ p["w_h"].T
        return loss, grads

    def to_checkpoint(self) -> Checkpoint:
        ck = Checkpoint()
        ck[PREFIX + "dims"] = np.array([self.m_max, self.hidden], dtype=np.float32)
        for k, v in self.params.items():
            ck[PREFIX + k] = v.astype(np.float32)
        return ck

    @classmethod
    def from_checkpoint(cls, ck: Checkpoint) -> "TemporalModel":
        m_max, hidden = (int(d) for d in ck.require(PREFIX + "dims", (2,)))
        model = cls(m_max, hidden)
        for k, v in model.params.items():
            v[...] = ck.require(PREFIX + k, v.shape)
        model.trained = True
        return model


def _suffix(timeline: GroupTimeline) -> np.ndarray:
    return timeline.slices[timeline.first_active():]


def build_batch(model: TemporalModel, timelines: Sequence[GroupTimeline]):
    seqs = [(_suffix(t), t.size) for t in timelines]
    seqs = [(s, n) for s, n in seqs if s.shape[0] >= 2]
    if not seqs:
        raise ValueError("no group with at least 2 windows to learn from")
    t_len = max(s.shape[0] for s, _ in seqs) - 1
    size = model.m_max ** 2
    inputs = np.zeros((t_len, len(seqs), size), dtype=model.dtype)
    targets = np.zeros_like(inputs)
    mask = np.zeros_like(inputs)
    for k, (s, n) in enumerate(seqs):
        lm = model.loss_mask(n)
        for t in range(s.shape[0] - 1):
            inputs[t, k] = model.pad(s[t])
            targets[t, k] = model.pad(s[t + 1])
            mask[t, k] = lm
    return inputs, targets, mask


def train_temporal(timelines: Sequence[GroupTimeline], lr: float = 1e-4, epochs: int = 1000, seed: int = 0,
                   m_max: int = 32, hidden: int = 64, clip: float = 5.0) -> tuple[TemporalModel, list[float]]:
    model = TemporalModel(m_max, hidden, seed)
    inputs, targets, mask = build_batch(model, timelines)
    opt = Adam(lr)
    history = []
    for _ in range(epochs):
        loss, grads = model.loss_and_grads(inputs, targets, mask)
        clip_global_norm(grads, clip)
        opt.step(model.params, grads)
        history.append(loss)
    for k, v in model.params.items():
        check_finite(v, PREFIX + k)
    model.trained = True
    return model, history


def forecast_probabilities(model: TemporalModel, timeline: GroupTimeline) -> np.ndarray:
    """``(m_max, m_max)`` edge probabilities for the window after the last one, zero outside the roster."""
    seq = _suffix(timeline)
    if seq.shape[0] == 0:
        raise ValueError("empty timeline")
    inputs = np.stack([model.pad(c) for c in seq])[:, None, :]
    h = model.run(inputs)[-1]
    prob = model.head(h)[0].reshape(model.m_max, model.m_max).astype(np.float64)
    prob = (prob + prob.T) / 2
    n = timeline.size
    out = np.zeros_like(prob)
    out[:n, :n] = prob[:n, :n]
    np.fill_diagonal(out, 0.0)
    return out


def forecast(model: TemporalModel, timeline: GroupTimeline, padded: bool = False) -> np.ndarray:
    """Binary forecast of the next collaboration matrix (edge iff probability >= 0.5).

    Returns the roster block unless ``padded`` is set.
    """
    prob = forecast_probabilities(model, timeline)
    n = timeline.size
    adj = np.zeros(prob.shape, dtype=np.uint8)
    adj[:n, :n] = prob[:n, :n] >= 0.5
    np.fill_diagonal(adj, 0)
    return adj if padded else adj[:n, :n]
