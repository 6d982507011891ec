"""Dense layers with hand-derived backward passes.

All layers operate on row-major batches: inputs are ``(batch, features)``.
Arithmetic follows the dtype of the parameters, so a model can be cast to
float64 for gradient checking and back to float32 for training.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float32


class NonFiniteError(ArithmeticError):
    pass


def check_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


def sigmoid(x):
    # tanh form never overflows
    x = np.asarray(x)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(x):
    return np.maximum(x, 0)


def softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=DTYPE) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class Linear:
    """Affine map ``y = x @ w + b``."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None,
                 zero: bool = False, dtype=DTYPE):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if zero or rng is None:
            w = np.zeros((in_dim, out_dim), dtype=dtype)
        else:
            w = glorot(rng, in_dim, out_dim, dtype)
        self.params = {"w": w, "b": np.zeros(out_dim, dtype=dtype)}

    @classmethod
    def from_params(cls, params: dict[str, np.ndarray]) -> "Linear":
        layer = cls.__new__(cls)
        layer.in_dim, layer.out_dim = params["w"].shape
        layer.params = params
        return layer

    def forward(self, x):
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"Linear expects {self.in_dim} inputs, got {x.shape[-1]}")
        return x @ self.params["w"] + self.params["b"]

    def backward(self, x, dy):
        """Return ``(dx, grads)`` given the upstream gradient ``dy``."""
        grads = {"w": x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["w"].T, grads


class GruCell:
    """Gated recurrent unit.

    z = sigmoid(x Wz + h Uz + bz)
    r = sigmoid(x Wr + h Ur + br)
    c = tanh(x Wc + (r * h) Uc + bc)
    h' = (1 - z) * h + z * c
    """

    GATES = ("z", "r", "c")

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator | None = None,
                 dtype=DTYPE):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.params: dict[str, np.ndarray] = {}
        for g in self.GATES:
            if rng is None:
                self.params["w" + g] = np.zeros((input_dim, hidden_dim), dtype=dtype)
                self.params["u" + g] = np.zeros((hidden_dim, hidden_dim), dtype=dtype)
            else:
                self.params["w" + g] = glorot(rng, input_dim, hidden_dim, dtype)
                self.params["u" + g] = glorot(rng, hidden_dim, hidden_dim, dtype)
            self.params["b" + g] = np.zeros(hidden_dim, dtype=dtype)

    @classmethod
    def from_params(cls, params: dict[str, np.ndarray]) -> "GruCell":
        cell = cls.__new__(cls)
        cell.input_dim, cell.hidden_dim = params["wz"].shape
        cell.params = params
        return cell

    def step(self, h_prev, x):
        """One recurrence step; returns ``(h_new, cache)``."""
        p = self.params
        if h_prev.shape[-1] != self.hidden_dim or x.shape[-1] != self.input_dim:
            raise ValueError(
                f"GRU shape mismatch: hidden {h_prev.shape[-1]} vs {self.hidden_dim}, "
                f"input {x.shape[-1]} vs {self.input_dim}"
            )
        z = sigmoid(x @ p["wz"] + h_prev @ p["uz"] + p["bz"])
        r = sigmoid(x @ p["wr"] + h_prev @ p["ur"] + p["br"])
        rh = r * h_prev
        c = np.tanh(x @ p["wc"] + rh @ p["uc"] + p["bc"])
        h_new = (1 - z) * h_prev + z * c
        return h_new, (h_prev, x, z, r, rh, c)

    def backward(self, dh_new, cache, grads: dict[str, np.ndarray]):
        """Accumulate parameter gradients into ``grads``; return ``(dh_prev, dx)``."""
        p = self.params
        h_prev, x, z, r, rh, c = cache
        dz = dh_new * (c - h_prev)
        dc = dh_new * z
        dh_prev = dh_new * (1 - z)

        da_c = dc * (1 - c * c)
        grads["wc"] += x.T @ da_c
        grads["uc"] += rh.T @ da_c
        grads["bc"] += da_c.sum(axis=0)
        drh = da_c @ p["uc"].T
        dx = da_c @ p["wc"].T
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r

        da_z = dz * z * (1 - z)
        grads["wz"] += x.T @ da_z
        grads["uz"] += h_prev.T @ da_z
        grads["bz"] += da_z.sum(axis=0)
        dx += da_z @ p["wz"].T
        dh_prev += da_z @ p["uz"].T

        da_r = dr * r * (1 - r)
        grads["wr"] += x.T @ da_r
        grads["ur"] += h_prev.T @ da_r
        grads["br"] += da_r.sum(axis=0)
        dx += da_r @ p["wr"].T
        dh_prev += da_r @ p["ur"].T
        return dh_prev, dx

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}


def gru_step(cell: GruCell, h_prev, x):
    """Single-vector convenience wrapper around :meth:`GruCell.step`."""
    h_prev = np.asarray(h_prev, dtype=cell.params["wz"].dtype)
    x = np.asarray(x, dtype=cell.params["wz"].dtype)
    h, _ = cell.step(h_prev.reshape(1, -1), x.reshape(1, -1))
    return h[0]
