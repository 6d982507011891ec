import numpy as np
import pytest

from groupsleuth.nncore import (
    Adam,
    Checkpoint,
    CheckpointError,
    GruCell,
    Linear,
    NonFiniteError,
    Sgd,
    bce,
    bce_grad,
    check_finite,
    clip_global_norm,
    cross_entropy,
    gru_step,
    load_checkpoint,
    save_checkpoint,
    sigmoid,
    softmax_rows,
    train_step,
)
from groupsleuth.nncore.checkpoint import from_bytes, to_bytes


def test_sigmoid_is_stable_at_extremes():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(s))
    np.testing.assert_allclose(s, [0.0, 0.5, 1.0], atol=1e-12)


def test_softmax_rows_sum_to_one():
    z = softmax_rows(np.array([[1000.0, 1000.0], [0.0, np.log(3.0)]]))
    np.testing.assert_allclose(z, [[0.5, 0.5], [0.25, 0.75]])


def test_linear_forward_and_shape_check(rng):
    layer = Linear(3, 2, rng, dtype=np.float64)
    x = rng.normal(size=(4, 3))
    np.testing.assert_allclose(layer.forward(x), x @ layer.params["w"] + layer.params["b"])
    with pytest.raises(ValueError):
        layer.forward(np.zeros((1, 4)))


def test_linear_backward_closed_form(rng):
    layer = Linear(3, 2, rng, dtype=np.float64)
    x = rng.normal(size=(4, 3))
    dy = rng.normal(size=(4, 2))
    dx, grads = layer.backward(x, dy)
    np.testing.assert_allclose(grads["w"], x.T @ dy)
    np.testing.assert_allclose(grads["b"], dy.sum(axis=0))
    np.testing.assert_allclose(dx, dy @ layer.params["w"].T)


def test_zero_gru_keeps_half_state():
    # all-zero weights give z = 0.5 and c = 0, so the state halves each step
    cell = GruCell(2, 3, rng=None, dtype=np.float64)
    h = gru_step(cell, np.ones(3), np.ones(2))
    np.testing.assert_allclose(h, 0.5 * np.ones(3))


def test_gru_shape_mismatch_raises(rng):
    cell = GruCell(2, 3, rng)
    with pytest.raises(ValueError, match="shape mismatch"):
        cell.step(np.zeros((1, 4)), np.zeros((1, 2)))


def test_bce_values_and_clamp():
    assert bce([0.5], [1.0]) == pytest.approx(np.log(2))
    assert np.isfinite(bce([0.0], [1.0]))
    assert bce([0.0], [1.0]) == pytest.approx(-np.log(1e-7))
    with pytest.raises(ValueError, match="length mismatch"):
        bce([0.5, 0.5], [1.0])


def test_bce_grad_matches_differences_and_zero_when_clamped():
    p = np.array([0.2, 0.7, 0.9])
    t = np.array([1.0, 0.0, 1.0])
    g = bce_grad(p, t)
    eps = 1e-7
    for i in range(3):
        up, down = p.copy(), p.copy()
        up[i] += eps
        down[i] -= eps
        assert g[i] == pytest.approx((bce(up, t) - bce(down, t)) / (2 * eps), rel=1e-5)
    assert bce_grad([0.0], [1.0])[0] == 0.0


def test_cross_entropy_one_hot():
    assert cross_entropy([[0.25, 0.75]], [[0, 1]]) == pytest.approx(-np.log(0.75))


def test_clip_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_global_norm(grads, 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose([grads["a"][0], grads["b"][0]], [0.6, 0.8])
    small = {"a": np.array([0.1])}
    clip_global_norm(small, 1.0)
    assert small["a"][0] == 0.1


def test_adam_first_step_moves_by_lr():
    # bias correction makes the first step exactly lr * sign(g)
    p = {"w": np.array([1.0, -1.0])}
    Adam(0.1).step(p, {"w": np.array([2.0, -0.5])})
    np.testing.assert_allclose(p["w"], [0.9, -0.9], atol=1e-6)


def test_adam_minimizes_quadratic():
    p = {"w": np.array([5.0])}
    opt = Adam(0.1)
    for _ in range(500):
        opt.step(p, {"w": 2 * p["w"]})
    assert abs(p["w"][0]) < 1e-2


def test_sgd_and_train_step():
    p = {"w": np.array([1.0])}
    Sgd(0.5).step(p, {"w": np.array([1.0])})
    assert p["w"][0] == 0.5
    train_step(p, {"w": np.array([1.0])}, "sgd", lr=0.5)
    assert p["w"][0] == 0.0
    with pytest.raises(ValueError):
        Sgd(0.0)
    with pytest.raises(ValueError):
        train_step(p, {"w": np.array([1.0])}, "adam")


def test_check_finite():
    check_finite(np.ones(3))
    with pytest.raises(NonFiniteError):
        check_finite(np.array([1.0, np.nan]), "w")


def test_checkpoint_round_trip(tmp_path, rng):
    ck = Checkpoint()
    ck["a.w"] = rng.normal(size=(3, 2)).astype(np.float32)
    ck["a.b"] = np.zeros(2, dtype=np.float32)
    ck["scalar"] = np.array(1.5, dtype=np.float32)
    save_checkpoint(tmp_path / "m.ckpt", ck)
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert list(back) == list(ck)
    for k in ck:
        np.testing.assert_array_equal(back[k], ck[k])
    assert back.with_prefix("a.").keys() == {"w", "b"}


def test_checkpoint_rejects_corruption():
    data = to_bytes({"w": np.ones(3, dtype=np.float32)})
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"XX" + data[2:])
    with pytest.raises(CheckpointError, match="truncated"):
        from_bytes(data[:-2])
    with pytest.raises(CheckpointError, match="trailing"):
        from_bytes(data + b"\0")


def test_checkpoint_require():
    ck = Checkpoint(w=np.ones((2, 2), dtype=np.float32))
    with pytest.raises(CheckpointError, match="missing"):
        ck.require("v")
    with pytest.raises(CheckpointError, match="shape"):
        ck.require("w", (3, 2))
