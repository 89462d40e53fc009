"""Command-line entry point.

Subcommands: train, eval, infer, batch-variance, grid-search. Exit codes:
0 success, 1 usage error, 2 data/model error. Diagnostics go to stderr; the
requested output file is the only thing written to --out.
"""

import argparse
import sys
from dataclasses import replace

from . import harness, inference, trainer
from .embed_store import load_embedding_table_file, load_sentence_store_file
from .errors import IerlError

USAGE_EXIT = 1
DATA_EXIT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the taxonomy wants 1
        raise UsageError(message)


def _add_source_flags(p, with_task=True):
    p.add_argument("--dataset", required=True, help="task TSV file")
    if with_task:
        p.add_argument("--task", required=True, choices=["similarity", "entailment"],
                       help="label scheme of the dataset")
    p.add_argument("--llm-emb", required=True, help="sentence-store file (LLM vectors)")
    p.add_argument("--kg-emb", required=True, help="embedding-table file (KG vectors)")


def _add_train_flags(p):
    p.add_argument("--agg", default="moments", choices=["mean", "moments"],
                   help="context aggregation (default: moments)")
    p.add_argument("--max-power", type=int, default=None,
                   help="highest element-wise power in moments aggregation "
                        "(default: 3; only valid with --agg moments)")
    p.add_argument("--lr", type=float, default=0.1,
                   help="solver learning rate (default: 0.1)")
    p.add_argument("--l1-weight", type=float, default=1.0,
                   help="L1 penalty weight (default: 1.0)")
    p.add_argument("--tol", type=float, default=1e-8,
                   help="convergence threshold on the objective decrease (default: 1e-8)")
    p.add_argument("--max-iters", type=int, default=10000,
                   help="iteration cap per model (default: 10000)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for parameter initialization and sampling (default: 0)")


def build_parser() -> _Parser:
    parser = _Parser(prog="ierl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("train", help="fit per-sentence models and write a model store")
    _add_source_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="model-store JSONL output path")

    p = sub.add_parser("eval", help="score a trained store against a labelled TSV")
    _add_source_flags(p)
    p.add_argument("--models", required=True, help="model-store JSONL from 'train'")
    p.add_argument("--out", required=True, help="evaluation report JSON path")

    p = sub.add_parser("infer", help="run pair inference and write the interpretability report")
    _add_source_flags(p, with_task=False)
    p.add_argument("--models", required=True, help="model-store JSONL from 'train'")
    p.add_argument("--out", required=True, help="interpretability report JSON path")

    p = sub.add_parser("batch-variance",
                       help="retrain on random batches and report the step-count range")
    _add_source_flags(p)
    _add_train_flags(p)
    p.add_argument("--batch-fraction", type=float, default=0.8,
                   help="fraction of the dataset per batch (default: 0.8)")
    p.add_argument("--num-batches", type=int, default=10,
                   help="number of batches (default: 10)")
    p.add_argument("--out", required=True, help="batch-variance report JSON path")

    p = sub.add_parser("grid-search", help="search hyperparameters against a dev split")
    _add_source_flags(p)
    _add_train_flags(p)
    p.add_argument("--dev", required=True, help="disjoint dev-split TSV for scoring")
    p.add_argument("--grid", required=True, help="JSON grid spec "
                   '({"learning_rates": [...], "l1_weights": [...], "max_powers": [...]})')
    p.add_argument("--out", required=True, help="grid report JSON path")

    return parser


def _config_from(args) -> trainer.TrainConfig:
    if args.agg == "mean" and args.max_power is not None:
        raise UsageError("--max-power conflicts with --agg mean")
    cfg = trainer.TrainConfig(
        learning_rate=args.lr,
        l1_weight=args.l1_weight,
        tol=args.tol,
        max_iters=args.max_iters,
        seed=args.seed,
        agg_mode=args.agg,
    )
    if args.max_power is not None:
        cfg = replace(cfg, max_power=args.max_power)
    return cfg


def _load_sources(args):
    store = load_sentence_store_file(args.llm_emb)
    table = load_embedding_table_file(args.kg_emb)
    return store, table


def _cmd_train(args) -> int:
    config = _config_from(args)
    dataset = harness.load_task_tsv(args.dataset, args.task)
    store, table = _load_sources(args)
    result = trainer.train(dataset.instances, store, table, config)
    result.store.save(args.out)
    print(f"trained {len(result.store)} models "
          f"(run steps {result.run_steps}) -> {args.out}", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    dataset = harness.load_task_tsv(args.dataset, args.task)
    store, table = _load_sources(args)
    models = trainer.ModelStore.load(args.models)
    echo = {"dataset": args.dataset, "task": args.task, "models": args.models,
            "llm_emb": args.llm_emb, "kg_emb": args.kg_emb}
    report = harness.evaluate(models, dataset, store, table, config_echo=echo)
    harness.emit_report(report, args.out)
    print(f"accuracy {report.accuracy:.4f} on {report.total} instances -> {args.out}",
          file=sys.stderr)
    return 0


def _cmd_infer(args) -> int:
    pairs = harness.load_pairs_tsv(args.dataset)
    store, table = _load_sources(args)
    models = trainer.ModelStore.load(args.models)
    results = [inference.infer_pair(z, z2, models, store, table) for z, z2 in pairs]
    report = inference.interpretability_report(results, models)
    harness.emit_report(report, args.out)
    print(f"inferred {len(results)} pairs "
          f"({report['green']} green / {report['pink']} pink) -> {args.out}",
          file=sys.stderr)
    return 0


def _cmd_batch_variance(args) -> int:
    config = _config_from(args)
    dataset = harness.load_task_tsv(args.dataset, args.task)
    store, table = _load_sources(args)
    report = harness.batch_variance_experiment(
        dataset.instances, config, args.num_batches, args.seed, store, table,
        batch_fraction=args.batch_fraction)
    harness.emit_report(report, args.out)
    print(f"step range {report.min_steps}-{report.max_steps} "
          f"over {report.num_batches} batches -> {args.out}", file=sys.stderr)
    return 0


def _cmd_grid_search(args) -> int:
    base = _config_from(args)
    train_ds = harness.load_task_tsv(args.dataset, args.task)
    dev_ds = harness.load_task_tsv(args.dev, args.task)
    store, table = _load_sources(args)
    grid = harness.load_grid_spec(args.grid)
    best, cells = harness.grid_search(train_ds, dev_ds, grid, base, store, table)
    harness.emit_report({"best": best, "cells": cells}, args.out)
    print(f"best cell: lr={best.learning_rate} l1={best.l1_weight} "
          f"max_power={best.max_power} -> {args.out}", file=sys.stderr)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "batch-variance": _cmd_batch_variance,
    "grid-search": _cmd_grid_search,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (IerlError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
