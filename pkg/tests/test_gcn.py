import numpy as np
import pytest

from groupsleuth.gcn import GcnModel, GroupGraph, normalize_adjacency, refine_group, train_gcn
from groupsleuth.nncore import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint


def dense_oracle(a):
    a_hat = a + np.eye(len(a))
    d = np.diag(a_hat.sum(axis=1) ** -0.5)
    return d @ a_hat @ d


def test_closed_forms():
    np.testing.assert_allclose(normalize_adjacency(np.array([[0, 1], [1, 0]])), 0.5 * np.ones((2, 2)))
    np.testing.assert_allclose(normalize_adjacency(np.zeros((1, 1))), [[1.0]])
    np.testing.assert_allclose(normalize_adjacency(np.zeros((3, 3))), np.eye(3))


@pytest.mark.parametrize("seed", range(10))
def test_random_graphs_match_oracle(seed):
    rng = np.random.default_rng(seed)
    a = np.triu((rng.random((5, 5)) < 0.5).astype(float), 1)
    a = a + a.T
    c = normalize_adjacency(a)
    np.testing.assert_allclose(c, dense_oracle(a), atol=1e-12)
    np.testing.assert_allclose(c, c.T)
    eig = np.linalg.eigvalsh(c)
    assert eig.max() <= 1 + 1e-12 and eig.min() >= -1 - 1e-12


def test_normalize_rejects_non_square():
    with pytest.raises(ValueError):
        normalize_adjacency(np.zeros((2, 3)))


def test_forward_shapes_and_probabilities(rng):
    model = GcnModel(5, 3, seed=1)
    h, z, _ = model.forward(np.zeros((4, 4)), rng.normal(size=(4, 5)))
    assert h.shape == (4, 3) and (h >= 0).all()
    np.testing.assert_allclose(z.sum(axis=1), 1, rtol=1e-6)
    with pytest.raises(ValueError):
        model.forward(np.zeros((4, 4)), rng.normal(size=(4, 6)))
    with pytest.raises(ValueError):
        model.forward(np.zeros((3, 3)), rng.normal(size=(4, 5)))


def test_training_separates_labels(rng):
    graphs = []
    for k in range(8):
        y = np.array([0, 0, 1, 1])
        v = rng.normal(size=(4, 6)) + 2.0 * y[:, None] * np.eye(6)[0]
        graphs.append(GroupGraph(f"g{k}", list(range(4)), np.zeros((4, 4)), v, y))
    model, hist = train_gcn(graphs, lr=1e-2, epochs=100, hidden=8)
    assert hist[-1] < hist[0]
    acc = np.mean([(refine_group(model, g)[1].argmax(1) == g.labels).mean() for g in graphs])
    assert acc >= 0.9
    with pytest.raises(ValueError, match="no labelled"):
        train_gcn([GroupGraph("u", [0], np.zeros((1, 1)), np.zeros((1, 6)))])


def test_checkpoint_round_trip(tmp_path, rng):
    model = GcnModel(5, 3, seed=2)
    save_checkpoint(tmp_path / "g.ckpt", model.to_checkpoint())
    back = GcnModel.from_checkpoint(load_checkpoint(tmp_path / "g.ckpt"))
    graph = GroupGraph("g", [0, 1], np.array([[0, 1], [1, 0]]), rng.normal(size=(2, 5)))
    np.testing.assert_allclose(refine_group(back, graph)[0], refine_group(model, graph)[0])
    bad = Checkpoint({"gcn.w0": np.zeros((5, 3), np.float32), "gcn.w1": np.zeros((4, 2), np.float32)})
    with pytest.raises(CheckpointError):
        GcnModel.from_checkpoint(bad)
