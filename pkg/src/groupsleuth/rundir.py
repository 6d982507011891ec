"""Run-directory layout and artifact persistence for the command line.

One subdirectory per stage::

    corpus/    corpus.tsv, truth.tsv
    embed/     embeddings.txt, reviewer_vectors.tsv
    group/     edges.tsv, rosters.tsv, split.tsv
    spatial/   hinrnn.ckpt, refined_edges.tsv
    temporal/  temporal.ckpt, forecast.tsv
    gcn/       gcn.ckpt, refined_reps.tsv
    classify/  fc.ckpt, verdicts.tsv
    eval/      metrics.tsv
    ablate/    ablation.tsv, strategies.tsv, plot_data.csv
    report/    interactions.tsv, plot_data.csv, pca.csv, *.png
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .artifacts import read_tsv, write_tsv
from .classify import FcClassifier, GroupVerdict
from .config import PipelineConfig, format_config, parse_config
from .corpus import LABEL_NAMES, Corpus, load_corpus
from .gcn import GcnModel
from .grouping import GroupTimeline, read_groups, write_groups
from .nncore import load_checkpoint, save_checkpoint
from .pipeline import ArtifactSource, MissingArtifact, Representations, represent
from .represent import EmbeddingTable, load_embeddings, load_reviewer_vectors, save_embeddings, save_reviewer_vectors
from .spatial import HinRnnModel
from .temporal import TemporalModel

# artifact name -> (relative path, description, producing subcommand)
ARTIFACTS = {
    "corpus": ("corpus/corpus.tsv", "corpus", "synth"),
    "truth": ("corpus/truth.tsv", "ground truth", "synth"),
    "embeddings": ("embed/embeddings.txt", "embeddings", "embed"),
    "vectors": ("embed/reviewer_vectors.tsv", "reviewer vectors", "embed"),
    "edges": ("group/edges.tsv", "co-review edges", "group"),
    "rosters": ("group/rosters.tsv", "group rosters", "group"),
    "split": ("group/split.tsv", "train/test split", "group"),
    "hinrnn": ("spatial/hinrnn.ckpt", "spatial checkpoint", "spatial-train"),
    "refined": ("spatial/refined_edges.tsv", "refined slices", "spatial-refine"),
    "temporal": ("temporal/temporal.ckpt", "temporal checkpoint", "temporal-train"),
    "forecast": ("temporal/forecast.tsv", "forecasts", "forecast"),
    "gcn": ("gcn/gcn.ckpt", "gcn checkpoint", "gcn-train"),
    "reps": ("gcn/refined_reps.tsv", "refined reps", "gcn-refine"),
    "fc": ("classify/fc.ckpt", "classifier checkpoint", "classify"),
    "verdicts": ("classify/verdicts.tsv", "verdicts", "classify"),
    "metrics": ("eval/metrics.tsv", "metrics", "eval"),
    "ablation": ("ablate/ablation.tsv", "ablation table", "ablate"),
    "strategies": ("ablate/strategies.tsv", "strategy comparison", "ablate"),
}


class RunLocked(RuntimeError):
    pass


class RunDir:
    def __init__(self, root):
        self.root = Path(root)
        self._cache: dict = {}

    # ---------------------------------------------------------------- paths
    def path(self, name: str) -> Path:
        return self.root / ARTIFACTS[name][0]

    def output(self, name: str) -> Path:
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def require(self, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            _, what, producer = ARTIFACTS[name]
            raise MissingArtifact(what, producer)
        return p

    def has(self, name: str) -> bool:
        return self.path(name).exists()

    def stage_dir(self, stage: str) -> Path:
        d = self.root / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    # ----------------------------------------------------------------- lock
    def lock(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.root / ".lock", os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RunLocked(f"{self.root} is in use by another invocation (delete {self.root / '.lock'} if stale)")
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)

    def unlock(self) -> None:
        try:
            (self.root / ".lock").unlink()
        except FileNotFoundError:
            pass

    # --------------------------------------------------------------- config
    def saved_config(self) -> PipelineConfig | None:
        p = self.root / "config.txt"
        if not p.exists():
            return None
        return parse_config(p.read_text(encoding="utf-8"), source=str(p))

    def save_config(self, cfg: PipelineConfig) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "config.txt").write_text(format_config(cfg), encoding="utf-8")

    # -------------------------------------------------------------- loaders
    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def corpus(self) -> Corpus:
        return self._memo("corpus", lambda: load_corpus(self.require("corpus")))

    def table(self) -> EmbeddingTable:
        return self._memo("table", lambda: load_embeddings(self.require("embeddings"), dim=None))

    def raw_vectors(self) -> np.ndarray:
        def load():
            ids, mat = load_reviewer_vectors(self.require("vectors"))
            corpus = self.corpus()
            if sorted(ids) != sorted(corpus.reviewer_index):
                raise ValueError("reviewer vectors do not match the corpus; rerun embed")
            out = np.zeros_like(mat)
            for rid, row in zip(ids, mat):
                out[corpus.reviewer_index[rid]] = row
            return out
        return self._memo("vectors", load)

    def representations(self, cfg: PipelineConfig) -> Representations:
        return self._memo("reps_in", lambda: represent(self.corpus(), self.table(), cfg, self.raw_vectors()))

    def groups(self) -> list[GroupTimeline]:
        return self._memo("groups", lambda: read_groups(self.corpus(), self.require("edges"), self.require("rosters")))

    def split(self) -> tuple[list[str], list[str]]:
        def load():
            rows, _ = read_tsv(self.require("split"), "split")
            return [r[0] for r in rows if r[1] == "train"], [r[0] for r in rows if r[1] == "test"]
        return self._memo("split", load)

    def refined(self) -> list[GroupTimeline]:
        return self._memo("refined", lambda: read_groups(self.corpus(), self.require("refined"),
                                                         self.require("rosters"), refined=True))

    def forecasts(self) -> dict[str, np.ndarray]:
        def load():
            rows, _ = read_tsv(self.require("forecast"), "forecast")
            idx = self.corpus().reviewer_index
            out = {g.group_id: np.zeros((g.size, g.size), dtype=np.uint8) for g in self.groups()}
            pos = {g.group_id: {m: k for k, m in enumerate(g.members)} for g in self.groups()}
            for gid, _tw, a, b in rows:
                i, j = pos[gid][idx[a]], pos[gid][idx[b]]
                out[gid][i, j] = out[gid][j, i] = 1
            return out
        return self._memo("forecast", load)

    def reps(self) -> dict[str, np.ndarray]:
        def load():
            rows, _ = read_tsv(self.require("reps"), "refined-reps")
            idx = self.corpus().reviewer_index
            by_group: dict[str, dict[int, np.ndarray]] = {}
            for row in rows:
                by_group.setdefault(row[0], {})[idx[row[1]]] = np.array([float(x) for x in row[2:]])
            out = {}
            for g in self.groups():
                if g.group_id not in by_group:
                    raise ValueError(f"refined reps lack group {g.group_id}; rerun gcn-refine")
                out[g.group_id] = np.stack([by_group[g.group_id][m] for m in g.members])
            return out
        return self._memo("reps", load)

    def hinrnn(self) -> HinRnnModel:
        return HinRnnModel.from_checkpoint(load_checkpoint(self.require("hinrnn")))

    def temporal(self) -> TemporalModel:
        return TemporalModel.from_checkpoint(load_checkpoint(self.require("temporal")))

    def gcn(self) -> GcnModel:
        return GcnModel.from_checkpoint(load_checkpoint(self.require("gcn")))

    def source(self) -> ArtifactSource:
        return ArtifactSource(self.loaders())

    def loaders(self) -> dict:
        return {"groups": self.groups, "split": self.split, "vectors": self.raw_vectors,
                "refined": self.refined, "forecast": self.forecasts, "reps": self.reps}

    # --------------------------------------------------------------- writers
    def save_embeddings(self, table: EmbeddingTable, raw: np.ndarray) -> None:
        save_embeddings(table, self.output("embeddings"))
        ids = self.corpus().reviewer_ids
        save_reviewer_vectors(ids, raw, self.output("vectors"))
        self._cache.pop("table", None)
        self._cache.pop("vectors", None)

    def save_groups(self, groups: list[GroupTimeline], split: tuple[list[str], list[str]]) -> None:
        write_groups(groups, self.corpus(), self.output("edges"), self.output("rosters"))
        train = set(split[0])
        write_tsv(self.output("split"), "split",
                  ([g.group_id, "train" if g.group_id in train else "test"] for g in groups),
                  columns=["group_id", "split"])

    def save_refined(self, refined: list[GroupTimeline]) -> None:
        write_groups(refined, self.corpus(), self.output("refined"), self.stage_dir("spatial") / "rosters.tsv",
                     refined=True)

    def save_forecasts(self, forecasts: dict[str, np.ndarray], n_windows: int) -> None:
        ids = self.corpus().reviewer_ids
        rows = []
        for g in self.groups():
            f = forecasts[g.group_id]
            ii, jj = np.nonzero(np.triu(f, 1))
            for i, j in zip(ii, jj):
                rows.append([g.group_id, n_windows, ids[g.members[i]], ids[g.members[j]]])
        write_tsv(self.output("forecast"), "forecast", rows, columns=["group_id", "tw", "member_a", "member_b"],
                  meta={"tw": "N+1", "n_windows": n_windows})

    def save_reps(self, reps: dict[str, np.ndarray]) -> None:
        ids = self.corpus().reviewer_ids
        rows = []
        for g in self.groups():
            for m, vec in zip(g.members, reps[g.group_id]):
                rows.append([g.group_id, ids[m], *[float(x) for x in vec]])
        write_tsv(self.output("reps"), "refined-reps", rows)

    def save_verdicts(self, verdicts: list[GroupVerdict], split: tuple[list[str], list[str]]) -> None:
        ids = self.corpus().reviewer_ids
        members = {g.group_id: g.members for g in self.groups()}
        train = set(split[0])
        rows = []
        for v in verdicts:
            kept = ",".join(ids[members[v.group_id][k]] for k in v.kept)
            rows.append([v.group_id, kept, v.score, LABEL_NAMES[v.label], v.bss_norm, v.mixed, v.strategy,
                         v.bss_total, "train" if v.group_id in train else "test"])
        write_tsv(self.output("verdicts"), "verdicts", rows,
                  columns=["group_id", "kept_members", "score", "label", "bss_norm", "mixed", "strategy",
                           "bss_raw", "split"])

    def verdict_labels(self) -> dict[str, tuple[int, str]]:
        names = {v: k for k, v in LABEL_NAMES.items()}
        rows, _ = read_tsv(self.require("verdicts"), "verdicts")
        return {r[0]: (names[r[3]], r[8]) for r in rows}

    def save_fc(self, fc: FcClassifier) -> None:
        save_checkpoint(self.output("fc"), fc.to_checkpoint())
