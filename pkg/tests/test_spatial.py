import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groupsleuth.nncore import load_checkpoint, save_checkpoint
from groupsleuth.spatial import (
    HinRnnModel,
    Slice,
    UntrainedModelError,
    from_sequence,
    order_nodes,
    refine_slice,
    to_sequence,
    train_hinrnn,
)


def random_graph(rng, n, p=0.5):
    a = np.triu((rng.random((n, n)) < p).astype(np.uint8), 1)
    return a | a.T


@st.composite
def graphs_with_orders(draw):
    n = draw(st.integers(1, 8))
    bits = draw(st.lists(st.booleans(), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    a = np.zeros((n, n), dtype=np.uint8)
    a[np.triu_indices(n, 1)] = bits
    a = a | a.T
    order = draw(st.permutations(range(n)))
    return a, list(order)


@given(graphs_with_orders())
@settings(max_examples=200)
def test_sequence_round_trip(case):
    a, order = case
    seq = to_sequence(a, order)
    assert [len(s) for s in seq] == list(range(len(order)))
    np.testing.assert_array_equal(from_sequence(seq, order), a)


def test_round_trip_all_orderings_small():
    rng = np.random.default_rng(1)
    for n in range(1, 5):
        a = random_graph(rng, n)
        for order in itertools.permutations(range(n)):
            np.testing.assert_array_equal(from_sequence(to_sequence(a, order), order), a)


def test_sequence_worked_example():
    # path 0-1-2 under the identity ordering
    a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    assert to_sequence(a, [0, 1, 2]) == [(), (1,), (0, 1)]
    with pytest.raises(ValueError):
        from_sequence([(), (1,)], [0, 1, 2])
    with pytest.raises(ValueError):
        from_sequence([(), (1, 0), (0, 1)], [0, 1, 2])


def test_bfs_ordering():
    # star centred on 2 plus an isolated node 4
    a = np.zeros((5, 5), dtype=np.uint8)
    for v in (0, 1, 3):
        a[2, v] = a[v, 2] = 1
    assert order_nodes(a) == [2, 0, 1, 3, 4]
    assert order_nodes(a, "given", [4, 3, 2, 1, 0]) == [4, 3, 2, 1, 0]
    with pytest.raises(ValueError):
        order_nodes(a, "given", [0, 0, 1, 2, 3])
    with pytest.raises(ValueError):
        order_nodes(a, "dfs")


def test_loglik_equals_sum_of_node_conditionals():
    rng = np.random.default_rng(2)
    model = HinRnnModel(vec_dim=3, m_max=6, graph_hidden=8, edge_hidden=4, seed=2).astype(np.float64)
    for v in model.params.values():
        v += rng.normal(0, 0.3, v.shape)
    s = Slice(random_graph(rng, 5), rng.normal(size=(5, 3)))
    assert model.log_likelihood(s) == pytest.approx(sum(model.node_conditionals(s)), rel=1e-9)


def test_batched_loss_independent_of_batch_composition():
    rng = np.random.default_rng(3)
    model = HinRnnModel(vec_dim=3, m_max=6, graph_hidden=8, edge_hidden=4, seed=3).astype(np.float64)
    slices = [Slice(random_graph(rng, n), rng.normal(size=(n, 3))) for n in (2, 5, 4)]
    # mean edge loss over the batch equals the pair-weighted mean of single-slice losses
    singles = [model.loss_and_grads([s])[0] for s in slices]
    pairs = [n * (n - 1) / 2 for n in (2, 5, 4)]
    joint, _ = model.loss_and_grads(slices)
    assert joint == pytest.approx(np.dot(singles, pairs) / sum(pairs), rel=1e-9)


def test_training_fits_and_refines_observed_structure(tmp_path):
    rng = np.random.default_rng(4)
    tri = np.ones((3, 3), dtype=np.uint8) - np.eye(3, dtype=np.uint8)
    path = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=np.uint8)
    slices = [Slice(tri, rng.normal(size=(3, 4))), Slice(path, rng.normal(size=(3, 4)))]
    model, hist = train_hinrnn(slices, lr=0.01, epochs=300, seed=0, vec_dim=4, m_max=4)
    assert hist[-1] < 0.1 * hist[0]
    moving = np.convolve(hist, np.ones(50) / 50, "valid")
    assert np.diff(moving).max() <= 0
    for s in slices:
        np.testing.assert_array_equal(refine_slice(model, s), s.adjacency)

    save_checkpoint(tmp_path / "h.ckpt", model.to_checkpoint())
    back = HinRnnModel.from_checkpoint(load_checkpoint(tmp_path / "h.ckpt"))
    for s in slices:
        np.testing.assert_array_equal(refine_slice(back, s), refine_slice(model, s))
    gen = refine_slice(model, slices[0], mode="generate")
    assert gen.shape == (3, 3) and (gen == gen.T).all() and not np.diag(gen).any()


def test_refine_guards():
    model = HinRnnModel(vec_dim=2, m_max=3, graph_hidden=4, edge_hidden=2)
    s = Slice(np.zeros((2, 2), dtype=np.uint8), np.zeros((2, 2)))
    with pytest.raises(UntrainedModelError):
        refine_slice(model, s)
    model.trained = True
    with pytest.raises(ValueError, match="exceeds m_max"):
        refine_slice(model, Slice(np.zeros((4, 4), dtype=np.uint8), np.zeros((4, 2))))
    with pytest.raises(ValueError, match="mode"):
        refine_slice(model, s, mode="beam")
    assert refine_slice(model, Slice(np.zeros((1, 1), dtype=np.uint8), np.zeros((1, 2)))).shape == (1, 1)
    with pytest.raises(ValueError, match="no trainable"):
        train_hinrnn([Slice(np.zeros((1, 1), dtype=np.uint8), np.zeros((1, 2)))], vec_dim=2)
