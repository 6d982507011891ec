"""End-to-end acceptance checks on the standard synthetic fixture.

Two consecutive ``run-all`` invocations with ``fixture.cfg`` back the
pipeline-level criteria; the rest are self-contained. Every criterion records
one PASS/FAIL line, printed in the terminal summary.
"""
from __future__ import annotations

import time
from itertools import permutations
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from helpers import LAYER_CHECKS
from groupsleuth.classify import kmeans2, remove_outliers
from groupsleuth.cli import EXIT_OK, main
from groupsleuth.config import PipelineConfig, load_config
from groupsleuth.gcn import normalize_adjacency
from groupsleuth.rundir import RunDir
from groupsleuth.spatial import from_sequence, to_sequence

FIXTURE = Path(__file__).resolve().parent.parent / "fixture.cfg"
BUDGET_S = 600.0


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def read_rows(path: Path) -> list[list[str]]:
    return [l.split("\t") for l in path.read_text().splitlines() if l and not l.startswith("#")]


@pytest.fixture(scope="module")
def fixture_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    runs, times = [], []
    for k in (1, 2):
        run = root / f"run{k}"
        t0 = time.perf_counter()
        code = main(["run-all", "--config", str(FIXTURE), "--run-dir", str(run)])
        times.append(time.perf_counter() - t0)
        assert code == EXIT_OK
        runs.append(run)
    return runs, times


def f1_table(path: Path) -> dict[str, float]:
    return {r[0]: float(r[3]) for r in read_rows(path)}


def test_fixture_f1_and_runtime(fixture_runs):
    (run, _), (elapsed, _) = fixture_runs
    f1 = f1_table(run / "ablate/ablation.tsv")
    ok = f1["full"] >= 0.90 and f1["full"] > f1["spatial"] and elapsed <= BUDGET_S
    record("fixture F1 and runtime", ok,
           f"F1(full)={f1['full']:.4f} (>=0.90), F1(spatial)={f1['spatial']:.4f} (strictly lower), "
           f"run-all {elapsed:.0f}s single-threaded (<= {BUDGET_S:.0f}s)")


def test_ablation_monotonicity(fixture_runs):
    (run, _), _ = fixture_runs
    f1 = f1_table(run / "ablate/ablation.tsv")
    full, gcn, spatial = f1["full"], f1["spatial+temporal+gcn"], f1["spatial"]
    ok = full >= gcn >= spatial and all(full >= v for v in f1.values())
    record("ablation monotonicity", ok, " ".join(f"{k}={v:.4f}" for k, v in f1.items()))


def test_gradient_suite():
    worst = {name: max(fn(seed) for seed in range(20)) for name, fn in sorted(LAYER_CHECKS.items())}
    ok = all(v < 1e-3 for v in worst.values())
    record("gradient suite (20 seeds, rel err < 1e-3)", ok, " ".join(f"{k}={v:.1e}" for k, v in worst.items()))


def test_sequence_round_trip():
    rng = np.random.default_rng(0)
    checked = 0
    ok = True
    for _ in range(100):
        n = int(rng.integers(1, 9))
        a = np.triu((rng.random((n, n)) < rng.random()).astype(np.uint8), 1)
        a = a | a.T
        orders = list(permutations(range(n))) if n <= 4 else [list(rng.permutation(n)) for _ in range(24)]
        for order in orders:
            ok &= bool(np.array_equal(from_sequence(to_sequence(a, order), order), a))
            checked += 1
    record("sequence round trip", ok, f"100 graphs, n<=8, {checked} orderings")


def test_bss_identity(fixture_runs):
    (run, _), _ = fixture_runs
    rd = RunDir(run)
    cfg = load_config(FIXTURE)
    worst, clustered = 0.0, 0
    from groupsleuth.classify import group_seed
    for gid, reps in rd.reps().items():
        _, out = remove_outliers(reps, "kmeans", seed=group_seed(gid, cfg.seed), gate=cfg.gate)
        scale = max(1.0, float(np.abs(out.tss).max()))
        worst = max(worst, float(np.abs(out.bss - (out.tss - out.wss)).max()) / scale)
        clustered += 1
    ex = kmeans2(np.array([0.0, 2.0]))
    example = ex.mixed and abs(ex.bss_norm - np.sqrt(2) / 2) < 1e-12
    ok = worst <= 1e-6 and example
    record("BSS = TSS - WSS", ok, f"{clustered} groups, worst scaled gap {worst:.1e}; [0,2] -> "
           f"bss_norm={ex.bss_norm:.6f}, mixed={ex.mixed}")


def test_gcn_normalization():
    two = np.allclose(normalize_adjacency(np.array([[0, 1], [1, 0]])), 0.5)
    single = np.allclose(normalize_adjacency(np.zeros((1, 1))), [[1.0]])
    rng = np.random.default_rng(0)
    random_ok = True
    for _ in range(20):
        a = np.triu((rng.random((5, 5)) < 0.5).astype(float), 1)
        a = a + a.T
        a_hat = a + np.eye(5)
        d = np.diag(a_hat.sum(axis=1) ** -0.5)
        c = normalize_adjacency(a)
        eig = np.linalg.eigvalsh(c)
        random_ok &= bool(np.allclose(c, d @ a_hat @ d) and np.allclose(c, c.T)
                          and eig.max() <= 1 + 1e-12 and eig.min() >= -1 - 1e-12)
    record("GCN normalization", two and single and random_ok,
           f"2-cycle={two}, singleton={single}, 20 random 5x5 vs dense oracle={random_ok}")


def test_separability(fixture_runs):
    (run, _), _ = fixture_runs
    sil = {}
    for line in (run / "report/plot_data.csv").read_text().splitlines():
        parts = line.split(",")
        if parts[0] == "silhouette":
            sil[parts[1]] = float(parts[2])
    ok = sil["gcn"] > sil["raw"]
    record("separability", ok, f"silhouette gcn={sil['gcn']:.4f} vs raw={sil['raw']:.4f}")


def test_strategy_ordering(fixture_runs):
    (run, _), _ = fixture_runs
    f1 = f1_table(run / "ablate/strategies.tsv")
    k = f1["kmeans"]
    ok = all(k >= f1[s] for s in ("centroid_threshold", "min_connection", "kmedians", "gmm_mahalanobis"))
    record("removal-strategy ordering", ok, " ".join(f"{s}={v:.4f}" for s, v in f1.items()))


def test_planted_group_recovery():
    from groupsleuth import pipeline as P
    from groupsleuth.synth import generate_synthetic

    cfg = PipelineConfig()
    cfg.synth.camouflage_rate = 0.0
    cfg.synth.outlier_rate = 0.0
    corpus, truth = generate_synthetic(cfg.synth, cfg.seed)
    groups = P.find_groups(corpus, P.embed(corpus, cfg), cfg)
    ids = corpus.reviewer_ids
    found = {frozenset(ids[m] for m in g.members) for g in groups}
    planted = {frozenset(t.members) for t in truth}
    record("planted-group recovery", found == planted,
           f"{len(found)} recovered vs {len(planted)} planted, {len(found ^ planted)} differing rosters")


def test_determinism(fixture_runs):
    (a, b), _ = fixture_runs
    same = {rel: (a / rel).read_bytes() == (b / rel).read_bytes()
            for rel in ("classify/verdicts.tsv", "eval/metrics.tsv")}
    record("determinism", all(same.values()), ", ".join(f"{k} identical={v}" for k, v in same.items()))
