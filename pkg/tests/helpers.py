"""Shared finite-difference utilities for the gradient tests."""
from __future__ import annotations

import numpy as np

EPS = 1e-6
FLOOR = 1e-7


def rel_error(numeric: float, analytic: float) -> float:
    return abs(numeric - analytic) / max(abs(numeric) + abs(analytic), FLOOR)


def check_params(loss_fn, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                 rng: np.random.Generator, per_tensor: int | None = None) -> float:
    """Worst relative error between ``grads`` and central differences of ``loss_fn()``.

    ``params`` are perturbed in place. With ``per_tensor`` set only that many
    randomly chosen entries of each tensor are checked.
    """
    worst = 0.0
    for name, p in params.items():
        idx = list(np.ndindex(p.shape))
        if per_tensor is not None and len(idx) > per_tensor:
            idx = [idx[i] for i in rng.choice(len(idx), per_tensor, replace=False)]
        for i in idx:
            orig = p[i]
            p[i] = orig + EPS
            up = loss_fn()
            p[i] = orig - EPS
            down = loss_fn()
            p[i] = orig
            worst = max(worst, rel_error((up - down) / (2 * EPS), float(grads[name][i])))
    return worst


# ------------------------------------------------------------------ per-layer checks
# Each returns the worst relative error for one seed, everything in float64.

def gru_worst(seed: int) -> float:
    from groupsleuth.nncore import GruCell

    rng = np.random.default_rng(seed)
    cell = GruCell(4, 5, rng, dtype=np.float64)
    for v in cell.params.values():
        v += rng.normal(0, 0.2, v.shape)
    xs = rng.normal(size=(3, 2, 4))
    weights = rng.normal(size=(2, 5))

    def run():
        h = np.zeros((2, 5))
        caches = []
        for x in xs:
            h, c = cell.step(h, x)
            caches.append(c)
        return h, caches

    def loss():
        return float((run()[0] * weights).sum())

    _, caches = run()
    grads = cell.zero_grads()
    dh = weights.copy()
    for c in reversed(caches):
        dh, _ = cell.backward(dh, c, grads)
    return check_params(loss, cell.params, grads, rng)


def temporal_worst(seed: int) -> float:
    from groupsleuth.grouping import GroupTimeline
    from groupsleuth.temporal import TemporalModel, build_batch

    rng = np.random.default_rng(seed)
    model = TemporalModel(m_max=4, hidden=5, seed=seed).astype(np.float64)
    for v in model.params.values():
        v += rng.normal(0, 0.3, v.shape)
    timelines = []
    for k, n in enumerate((3, 4)):
        s = (rng.random((int(rng.integers(3, 5)), n, n)) < 0.5).astype(np.uint8)
        s = np.triu(s, 1)
        s = s | s.transpose(0, 2, 1)
        s[0, 0, 1] = s[0, 1, 0] = 1
        timelines.append(GroupTimeline(f"t{k}", list(range(n)), s))
    inputs, targets, mask = build_batch(model, timelines)
    _, grads = model.loss_and_grads(inputs, targets, mask)
    return check_params(lambda: model.loss_and_grads(inputs, targets, mask)[0], model.params, grads, rng,
                        per_tensor=25)


def gcn_worst(seed: int) -> float:
    from groupsleuth.gcn import GcnModel

    rng = np.random.default_rng(seed)
    model = GcnModel(6, 4, seed=seed).astype(np.float64)
    n = int(rng.integers(2, 7))
    a = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
    a = a + a.T
    v = rng.normal(size=(n, 6))
    y = rng.integers(0, 2, n)
    _, grads = model.loss_and_grads(a, v, y)
    return check_params(lambda: model.loss_and_grads(a, v, y)[0], model.params, grads, rng)


def fc_worst(seed: int) -> float:
    from groupsleuth.classify import fc_loss_and_grads

    rng = np.random.default_rng(seed)
    params = {"w": rng.normal(0, 0.5, 5), "b": rng.normal(0, 0.5, 1)}
    x = rng.normal(size=(8, 5))
    y = rng.integers(0, 2, 8).astype(float)
    _, grads = fc_loss_and_grads(params["w"], params["b"][0], x, y)
    return check_params(lambda: fc_loss_and_grads(params["w"], params["b"][0], x, y)[0], params, grads, rng)


def hinrnn_worst(seed: int) -> float:
    from groupsleuth.spatial import HinRnnModel, Slice

    rng = np.random.default_rng(seed)
    model = HinRnnModel(vec_dim=3, m_max=5, graph_hidden=6, edge_hidden=3, seed=seed).astype(np.float64)
    for v in model.params.values():
        v += rng.normal(0, 0.2, v.shape)
    slices = []
    for n in (3, 5, 2):
        a = np.triu((rng.random((n, n)) < 0.5).astype(np.uint8), 1)
        a = a | a.T
        slices.append(Slice(a, rng.normal(size=(n, 3))))
    _, grads = model.loss_and_grads(slices)
    return check_params(lambda: model.loss_and_grads(slices)[0], model.params, grads, rng, per_tensor=12)


LAYER_CHECKS = {"gru": gru_worst, "temporal": temporal_worst, "gcn": gcn_worst, "fc": fc_worst,
                "hinrnn": hinrnn_worst}
