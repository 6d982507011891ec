"""Command-line entry point: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import pipeline as P
from .artifacts import ArtifactError, write_tsv
from .classify import STRATEGIES
from .config import ConfigError, PipelineConfig, apply, load_config
from .corpus import CorpusError, load_corpus, write_corpus, write_truth
from .evaluate import Metrics, compare_strategies, interaction_report, pca_project, run_ablations, silhouette
from .evaluate import verdict_metrics
from .nncore import CheckpointError, NonFiniteError, save_checkpoint
from .represent import RepresentationError, reviewer_matrix
from .rundir import RunDir, RunLocked
from .synth import generate_synthetic

log = logging.getLogger("groupsleuth")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_MISSING, EXIT_LOCKED = 0, 1, 2, 3, 4

STAGES = ["synth", "embed", "group", "spatial-train", "spatial-refine", "temporal-train", "forecast",
          "gcn-train", "gcn-refine", "classify", "eval", "ablate", "report"]


# ------------------------------------------------------------------- stages

def cmd_synth(run: RunDir, cfg: PipelineConfig, args) -> None:
    corpus, truth = generate_synthetic(cfg.synth, cfg.seed)
    write_corpus(corpus, run.output("corpus"))
    write_truth(truth, run.output("truth"))
    log.info("synth: %d reviews, %d reviewers, %d planted groups", len(corpus.reviews),
             len(corpus.reviewer_index), len(truth))


def cmd_embed(run: RunDir, cfg: PipelineConfig, args) -> None:
    if getattr(args, "corpus", None):
        write_corpus(load_corpus(args.corpus), run.output("corpus"))
    corpus = run.corpus()
    table = P.embed(corpus, cfg)
    run.save_embeddings(table, reviewer_matrix(corpus, table))
    log.info("embed: %d words, dim %d", len(table.vocab), table.dim)


def cmd_group(run: RunDir, cfg: PipelineConfig, args) -> None:
    groups = P.find_groups(run.corpus(), run.table(), cfg)
    if len(groups) < 2:
        raise ValueError(f"only {len(groups)} candidate group(s) found; need at least 2 to split")
    split = P.split_groups(groups, cfg)
    run.save_groups(groups, split)
    log.info("group: %d groups (%d train / %d test)", len(groups), len(split[0]), len(split[1]))


def _train_groups(run: RunDir, groups):
    train = set(run.split()[0])
    return [g for g in groups if g.group_id in train]


def cmd_spatial_train(run: RunDir, cfg: PipelineConfig, args) -> None:
    model, hist = P.spatial_train(_train_groups(run, run.groups()), run.representations(cfg), cfg)
    save_checkpoint(run.output("hinrnn"), model.to_checkpoint())
    log.info("spatial-train: final loss %.5f", hist[-1] if hist else float("nan"))


def cmd_spatial_refine(run: RunDir, cfg: PipelineConfig, args) -> None:
    refined = P.spatial_refine(run.hinrnn(), run.groups(), run.representations(cfg), cfg)
    run.save_refined(refined)


def cmd_temporal_train(run: RunDir, cfg: PipelineConfig, args) -> None:
    model, hist = P.temporal_train(_train_groups(run, run.refined()), cfg)
    save_checkpoint(run.output("temporal"), model.to_checkpoint())
    log.info("temporal-train: final loss %.5f", hist[-1] if hist else float("nan"))


def cmd_forecast(run: RunDir, cfg: PipelineConfig, args) -> None:
    refined = run.refined()
    forecasts = P.forecast_groups(run.temporal(), refined)
    run.save_forecasts(forecasts, refined[0].n_windows)


def cmd_gcn_train(run: RunDir, cfg: PipelineConfig, args) -> None:
    reps = run.representations(cfg)
    labels = P.reviewer_label_lookup(run.corpus(), cfg)
    model, hist = P.gcn_train(_train_groups(run, run.groups()), run.forecasts(), reps.all_time, labels, cfg)
    save_checkpoint(run.output("gcn"), model.to_checkpoint())
    log.info("gcn-train: final loss %.5f", hist[-1] if hist else float("nan"))


def cmd_gcn_refine(run: RunDir, cfg: PipelineConfig, args) -> None:
    reps = run.representations(cfg)
    run.save_reps(P.gcn_refine(run.gcn(), run.groups(), run.forecasts(), reps.all_time))


def cmd_classify(run: RunDir, cfg: PipelineConfig, args) -> None:
    run.require("reps")
    verdicts, fc = P.classify_groups("full", run.source(), cfg)
    run.save_verdicts(verdicts, run.split())
    run.save_fc(fc)
    log.info("classify: %d groups, %d flagged as fraud", len(verdicts), sum(v.label for v in verdicts))


METRIC_COLUMNS = ["scope", *Metrics.COLUMNS]


def cmd_eval(run: RunDir, cfg: PipelineConfig, args) -> None:
    predicted = run.verdict_labels()
    truth = {g.group_id: g.label for g in run.groups()}
    rows = []
    for scope in ("test", "train"):
        ids = [gid for gid, (_, split) in predicted.items() if split == scope]
        m = _metrics_for(ids, predicted, truth)
        rows.append([scope, *m.row()])
    write_tsv(run.output("metrics"), "metrics", rows, columns=METRIC_COLUMNS)
    log.info("eval: test F1 %.4f", float(rows[0][3]))


def _metrics_for(ids, predicted, truth):
    from .evaluate import metrics
    return metrics([predicted[i][0] for i in ids], [truth[i] for i in ids])


def cmd_ablate(run: RunDir, cfg: PipelineConfig, args) -> None:
    rows = run_ablations(run.loaders(), cfg)
    write_tsv(run.output("ablation"), "ablation",
              ([r.config, *r.metrics.row(), ",".join(r.accessed)] for r in rows),
              columns=["config", *Metrics.COLUMNS, "artifacts"])
    strategies = compare_strategies(run.source(), cfg)
    write_tsv(run.output("strategies"), "strategies", ([s, *m.row()] for s, m in strategies.items()),
              columns=["strategy", *Metrics.COLUMNS])
    lines = ["kind,name,precision,recall,f1"]
    lines += [f"config,{r.config},{r.metrics.precision:.6f},{r.metrics.recall:.6f},{r.metrics.f1:.6f}" for r in rows]
    lines += [f"strategy,{s},{m.precision:.6f},{m.recall:.6f},{m.f1:.6f}" for s, m in strategies.items()]
    (run.stage_dir("ablate") / "plot_data.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for r in rows:
        log.info("ablate: %-22s F1 %.4f", r.config, r.metrics.f1)


def cmd_report(run: RunDir, cfg: PipelineConfig, args) -> None:
    from . import plotting

    out = run.stage_dir("report")
    corpus = run.corpus()
    groups = run.groups()
    labels = P.reviewer_label_lookup(corpus, cfg)
    inter = interaction_report(groups, labels)
    write_tsv(out / "interactions.tsv", "interactions", inter,
              columns=["window", "count_genuine_in_fraud", "count_fraud_in_genuine"])
    lines = ["kind,key,a,b,c"]
    lines += [f"interactions,{w},{a},{b}," for w, a, b in inter]
    plotting.interactions_figure(inter, out / "interactions.png")

    # separability of the test batch: raw vectors against refined representations
    _, test_ids = run.split()
    test = [g for g in groups if g.group_id in set(test_ids)]
    reps = run.reps()
    raw = run.raw_vectors()
    members = [(g.group_id, k, m) for g in test for k, m in enumerate(g.members)]
    y = np.array([labels[m] for *_, m in members])
    x_raw = raw[[m for *_, m in members]]
    x_gcn = np.stack([reps[gid][k] for gid, k, _ in members])
    panels = []
    pca_rows = []
    for name, x in (("raw", x_raw), ("gcn", x_gcn)):
        proj = pca_project(x, seed=cfg.seed)
        panels.append((f"{name} vectors", proj.points, y))
        for (gid, _, m), p in zip(members, proj.points):
            pca_rows.append(f"{name},{gid},{corpus.reviewer_ids[m]},{labels[m]},{p[0]:.6f},{p[1]:.6f}")
        if len(set(y.tolist())) == 2:
            lines.append(f"silhouette,{name},{silhouette(x, y):.6f},,")
    (out / "pca.csv").write_text("space,group_id,reviewer_id,label,pc1,pc2\n" + "\n".join(pca_rows) + "\n",
                                 encoding="utf-8")
    plotting.pca_figure(panels, out / "pca.png")

    if run.has("ablation"):
        from .artifacts import read_tsv
        rows, _ = read_tsv(run.path("ablation"), "ablation")
        plotting.metrics_figure([r[0] for r in rows], [tuple(float(v) for v in r[1:4]) for r in rows],
                                out / "ablation.png", "configurations")
        lines += [f"config,{r[0]},{r[1]},{r[2]},{r[3]}" for r in rows]
        rows, _ = read_tsv(run.path("strategies"), "strategies")
        plotting.metrics_figure([r[0] for r in rows], [tuple(float(v) for v in r[1:4]) for r in rows],
                                out / "strategies.png", "outlier removal")
        lines += [f"strategy,{r[0]},{r[1]},{r[2]},{r[3]}" for r in rows]
    (out / "plot_data.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


HANDLERS = {
    "synth": cmd_synth,
    "embed": cmd_embed,
    "group": cmd_group,
    "spatial-train": cmd_spatial_train,
    "spatial-refine": cmd_spatial_refine,
    "temporal-train": cmd_temporal_train,
    "forecast": cmd_forecast,
    "gcn-train": cmd_gcn_train,
    "gcn-refine": cmd_gcn_refine,
    "classify": cmd_classify,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def cmd_run_all(run: RunDir, cfg: PipelineConfig, args) -> None:
    stages = list(STAGES)
    if getattr(args, "corpus", None):
        stages.remove("synth")
    for stage in stages:
        t0 = time.perf_counter()
        HANDLERS[stage](run, cfg, args)
        log.info("%s done in %.1fs", stage, time.perf_counter() - t0)


# -------------------------------------------------------------------- parser

HELP = {
    "synth": "generate a synthetic corpus with planted groups",
    "embed": "train (or load) word embeddings and reviewer vectors",
    "group": "build time windows, co-review graphs, candidate groups and the split",
    "spatial-train": "train the spatial model on training-group slices",
    "spatial-refine": "refine every group's per-window slices",
    "temporal-train": "train the temporal forecaster on refined slices",
    "forecast": "forecast each group's next-window collaboration matrix",
    "gcn-train": "train the graph convolution on forecasts and reviewer labels",
    "gcn-refine": "write refined reviewer representations (alias: refine)",
    "classify": "remove outliers and classify every group",
    "eval": "precision, recall and F1 of the verdicts",
    "ablate": "metrics for the four configurations and the removal strategies",
    "report": "interaction counts, PCA projections, silhouettes and figures",
    "run-all": "run every stage in order",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (flags override it)")
    common.add_argument("--seed", type=int, help="random seed for every stage")
    common.add_argument("--run-dir", default="run", help="run directory (default: ./run)")
    common.add_argument("--strategy", choices=STRATEGIES, help="outlier removal strategy")
    common.add_argument("--tau", type=float, help="co-review text similarity threshold")
    common.add_argument("--windows", type=int, help="number of windows the synthetic generator spans")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="groupsleuth", description="Fraud group detection pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in [*STAGES, "run-all"]:
        aliases = ["refine"] if name == "gcn-refine" else []
        p = sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name], aliases=aliases)
        if name in ("embed", "run-all"):
            p.add_argument("--corpus", help="ingest this corpus TSV instead of the run's corpus")
    return parser


def resolve_config(run: RunDir, args) -> PipelineConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = run.saved_config() or PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.strategy:
        cfg.strategy = args.strategy
    if args.tau is not None:
        cfg.tau = args.tau
    if args.windows is not None:
        cfg.synth.n_windows = args.windows
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        apply(cfg, key, value)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = "gcn-refine" if args.command == "refine" else args.command
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = RunDir(args.run_dir)
    try:
        cfg = resolve_config(run, args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run.lock()
    except RunLocked as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOCKED
    handler = cmd_run_all if command == "run-all" else HANDLERS[command]
    try:
        run.save_config(cfg)
        with threadpool_limits(1):
            handler(run, cfg, args)
    except P.MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ArtifactError, CheckpointError, CorpusError, RepresentationError, ConfigError, NonFiniteError,
            ValueError, KeyError, OSError) as exc:
        print(f"error: {command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    finally:
        run.unlock()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
