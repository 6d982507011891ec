from __future__ import annotations

import numpy as np

CLAMP = 1e-7


def _check_lengths(a, b):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"length mismatch: {np.shape(a)} vs {np.shape(b)}")


def bce(pred, target) -> float:
    """Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_lengths(pred, target)
    p = np.clip(pred, CLAMP, 1 - CLAMP)
    loss = -(target * np.log(p) + (1 - target) * np.log(1 - p))
    return float(np.mean(loss))


def bce_grad(pred, target):
    """Gradient of :func:`bce` with respect to ``pred`` (zero where clamped)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_lengths(pred, target)
    p = np.clip(pred, CLAMP, 1 - CLAMP)
    g = (p - target) / (p * (1 - p)) / pred.size
    g[(pred < CLAMP) | (pred > 1 - CLAMP)] = 0.0
    return g


def cross_entropy(probs, one_hot) -> float:
    """Mean over rows of ``-sum(one_hot * log(probs))``."""
    probs = np.asarray(probs, dtype=np.float64)
    one_hot = np.asarray(one_hot, dtype=np.float64)
    _check_lengths(probs, one_hot)
    p = np.clip(probs, CLAMP, 1.0)
    return float(np.mean(-np.sum(one_hot * np.log(p), axis=-1)))
