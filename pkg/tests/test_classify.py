import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from groupsleuth.classify import (
    STRATEGIES,
    FcClassifier,
    classify_group,
    group_seed,
    group_vector,
    kmeans2,
    kmedians2,
    remove_outliers,
    split_statistics,
    train_fc,
)
from groupsleuth.nncore import load_checkpoint, save_checkpoint


def test_worked_1d_example():
    out = kmeans2(np.array([0.0, 2.0]))
    np.testing.assert_allclose(out.tss, [2.0])
    np.testing.assert_allclose(out.wss, [0.0])
    assert out.bss_norm == pytest.approx(np.sqrt(2) / 2, abs=1e-12)
    assert out.mixed
    # two members can never lose one of them
    assert remove_outliers(np.array([[0.0], [2.0]]))[0] == [0, 1]


def test_worked_2d_example_keeps_near_pair():
    x = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]])
    out = kmeans2(x, seed=0)
    assert out.mixed
    assert out.kept() == [0, 1]
    kept, _ = remove_outliers(x, "kmeans")
    assert kept == [0, 1]


def test_pure_group_not_mixed():
    x = np.array([[0.0], [0.1], [0.2], [0.15]])
    out = kmeans2(x)
    assert not out.mixed
    assert out.kept() == [0, 1, 2, 3]


@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 4)),
              elements=st.floats(-100, 100, allow_nan=False, width=64)),
       st.integers(0, 2 ** 16))
@settings(max_examples=200, deadline=None)
def test_bss_identity(x, seed):
    for fn in (kmeans2, kmedians2):
        out = fn(x, seed=seed)
        scale = max(1.0, float(np.abs(out.tss).max()))
        np.testing.assert_allclose(out.bss, out.tss - out.wss, atol=1e-6 * scale)
        assert out.bss.min() >= -1e-6 * scale
        assert 0 <= out.assignment.min() and out.assignment.max() <= 1


def test_dominant_tie_goes_to_first_member():
    x = np.array([[0.0], [10.0], [0.0], [10.0]])
    out = split_statistics(x, np.array([1, 0, 1, 0]))
    assert out.dominant == 1
    assert out.kept() == [0, 2]


def test_kmeans_deterministic_per_seed(rng):
    x = rng.normal(size=(10, 3))
    a, b = kmeans2(x, seed=5), kmeans2(x, seed=5)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    assert group_seed("g0001", 1) == group_seed("g0001", 1) != group_seed("g0002", 1)


def test_kmedians_resists_a_far_point():
    x = np.array([[0.0], [1.0], [2.0], [100.0]])
    out = kmedians2(x)
    assert sorted(out.kept()) == [0, 1, 2]


def test_other_strategies():
    x = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1], [4.0, 4.0]])
    assert remove_outliers(x, "centroid_threshold")[0] == [0, 1, 2, 3]
    assert remove_outliers(x, "gmm_mahalanobis")[0] == [0, 1, 2, 3]
    adj = np.array([[0, 1, 1, 1, 0], [1, 0, 1, 0, 0], [1, 1, 0, 0, 1], [1, 0, 0, 0, 0], [0, 0, 1, 0, 0]])
    assert remove_outliers(x, "min_connection", adj)[0] == [0, 1, 2]
    # every member tied at the minimum: nobody is removed
    assert remove_outliers(x, "min_connection", np.zeros((5, 5)))[0] == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError, match="adjacency"):
        remove_outliers(x, "min_connection")
    with pytest.raises(ValueError, match="unknown strategy"):
        remove_outliers(x, "dbscan")


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_strategies_never_empty(strategy, rng):
    for n in (1, 2, 3, 7):
        x = rng.normal(size=(n, 3))
        kept, _ = remove_outliers(x, strategy, np.ones((n, n)) - np.eye(n))
        assert kept and set(kept) <= set(range(n))


def test_identical_points():
    x = np.ones((4, 2))
    out = kmeans2(x)
    assert out.bss_norm == 0 and not out.mixed
    assert remove_outliers(x, "gmm_mahalanobis")[0] == [0, 1, 2, 3]
    assert remove_outliers(x, "centroid_threshold")[0] == [0, 1, 2, 3]


def test_input_validation():
    with pytest.raises(ValueError):
        kmeans2(np.zeros((3, 0)))
    np.testing.assert_allclose(group_vector([[1.0, 2.0], [3.0, 4.0]]), [2.0, 3.0])


def test_fc_learns_separable_data(rng, tmp_path):
    x = np.vstack([rng.normal(-1, 0.3, (20, 2)), rng.normal(1, 0.3, (20, 2))])
    y = np.array([0] * 20 + [1] * 20)
    fc, hist = train_fc(x, y, lr=0.05, epochs=200)
    assert hist[-1] < hist[0]
    assert ((fc.score(x) >= 0.5) == y).mean() == 1.0
    save_checkpoint(tmp_path / "fc.ckpt", fc.to_checkpoint())
    back = FcClassifier.from_checkpoint(load_checkpoint(tmp_path / "fc.ckpt"))
    np.testing.assert_allclose(back.score(x), fc.score(x), atol=1e-6)


def test_fc_untrained_scores_half_and_single_class_fallback(caplog):
    fc, _ = train_fc(np.zeros((2, 3)), np.array([0, 1]), epochs=0)
    assert fc.score(np.ones(3)) == 0.5
    fc, hist = train_fc(np.ones((3, 2)), np.array([1, 1, 1]))
    assert fc.constant == 1.0 and hist == []
    assert "single class" in caplog.text
    np.testing.assert_array_equal(fc.score(np.zeros((2, 2))), [1.0, 1.0])
    with pytest.raises(ValueError):
        train_fc(np.zeros((0, 2)), np.zeros(0))


def test_classify_group_threshold():
    fc = FcClassifier(np.array([1.0]), 0.0)
    assert classify_group(fc, "g", [0.0]).label == 1  # score exactly 0.5 counts as fraud
    v = classify_group(fc, "g", [-3.0], [0, 1], kmeans2(np.array([0.0, 2.0])), "kmeans")
    assert v.label == 0 and v.mixed and v.bss_total == pytest.approx(2.0)
