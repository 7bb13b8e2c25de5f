"""Command-line entry point: ``aucner <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .corpus import build_vocab, to_conll
from .model import ModelConfig, save_checkpoint
from .objectives import DEFAULT_LAMBDA
from .runner import (
    ExperimentError,
    ExperimentSpec,
    emit_report,
    load_aggregates,
    load_corpora,
    load_spec,
    make_partition,
    run_experiment,
)
from .sampling import read_manifest, write_manifest
from .training import LOSS_KINDS, TrainConfig, train

log = logging.getLogger("aucner")


def _corpus_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", default="synthetic",
                   help='directory with train/dev/test CoNLL files, or "synthetic" (default)')
    p.add_argument("--tag-column", type=int, default=-1, help="tag column index (default: last)")
    p.add_argument("--keep-type", default=None, help="keep only this entity type; others become O")
    p.add_argument("--synthetic-seed", type=int, default=13)


def _load(args):
    return load_corpora(args.corpus, args.tag_column, args.keep_type, args.synthetic_seed)


# --------------------------------------------------------------------------


def cmd_prepare(args) -> int:
    corpora = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.corpus == "synthetic":
        for name, c in corpora.items():
            (out / f"{name}.conll").write_text(to_conll(c), encoding="utf-8")
    vocab = build_vocab(corpora["train"], args.min_count)
    stats = {name: c.stats() for name, c in corpora.items()}
    (out / "stats.json").write_text(json.dumps(stats, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (out / "vocab.json").write_text(
        json.dumps({"min_count": args.min_count, "digest": vocab.digest(), "words": vocab.words()}, indent=0) + "\n",
        encoding="utf-8",
    )
    for name, s in stats.items():
        dist = s.get("label_distribution", {})
        print(f"{name:5s} sentences={s['sentences']} tokens={s['tokens']} "
              + " ".join(f"{k}={v:.2f}%" for k, v in dist.items()))
    print(f"vocab size {vocab.size} (min_count {args.min_count}, digest {vocab.digest()}) -> {out}")
    return 0


def _spec_from_args(args, **extra) -> ExperimentSpec:
    return ExperimentSpec(
        corpus=args.corpus, tag_column=args.tag_column, keep_type=args.keep_type,
        synthetic_seed=args.synthetic_seed, seed=args.seed, **extra,
    )


def cmd_sample(args) -> int:
    corpora = _load(args)
    spec = _spec_from_args(args, budget_unit=args.unit, tolerance_pp=args.tolerance)
    parts = [make_partition(spec, corpora["train"], args.size, args.entity_pct, i) for i in range(args.partitions)]
    write_manifest(args.out, parts)
    for i, p in enumerate(parts):
        print(f"#{i}: {len(p)} sentences, {p.n_tokens} tokens, {p.entity_pct:.2f}% entity tokens")
    print(f"wrote {len(parts)} partitions -> {args.out}")
    return 0


def cmd_train(args) -> int:
    corpora = _load(args)
    if args.manifest:
        part = read_manifest(args.manifest)[args.index]
    else:
        if args.size is None:
            raise SystemExit("train: give --size or --manifest")
        spec = _spec_from_args(args, budget_unit=args.unit)
        part = make_partition(spec, corpora["train"], args.size, args.entity_pct, args.index)
    train_corpus = part.select(corpora["train"])
    vocab = build_vocab(train_corpus, args.min_count)
    config = TrainConfig(
        loss_kind=args.method, lam=args.lam, margin=args.margin, lr_primal=args.lr, lr_dual=args.lr_dual,
        momentum=args.momentum, epochs=args.epochs, batch_sentences=args.batch, seed=args.seed,
    )
    rec = train(config, train_corpus, corpora["dev"], corpora["test"], vocab, partition=part.to_record())
    if args.checkpoint:
        save_checkpoint(args.checkpoint, rec.params, ModelConfig(**rec.model_config), vocab.digest(),
                        {"train_config": rec.config})
        rec.checkpoint = args.checkpoint
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "a", encoding="utf-8") as f:
        f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    t = rec.test
    print(f"{args.method}: best dev epoch {rec.best_epoch}, test P={t['precision']:.4f} R={t['recall']:.4f} "
          f"F1={t['f1']:.4f} ({rec.wall_clock:.1f}s) -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    spec = load_spec(args.config) if args.config else ExperimentSpec()
    overrides = {
        "corpus": args.corpus, "methods": args.method, "sizes": args.size, "entity_pcts": args.entity_pct,
        "lambdas": args.lam, "partitions": args.partitions, "seed": args.seed, "out": args.out,
        "name": args.name, "lr_grid": args.lr_grid, "budget_unit": args.unit, "aggregate": args.aggregate,
        "epochs": args.epochs,
    }
    overrides = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items() if v is not None}
    spec = replace(spec, **overrides)
    try:
        res = run_experiment(spec, jobs=args.jobs)
    except ExperimentError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(Path(res.paths["table_txt"]).read_text(encoding="utf-8"), end="")
    for k, v in sorted(res.paths.items()):
        print(f"{k}: {v}")
    if res.n_failed:
        print(f"warning: {res.n_failed} runs failed (excluded from aggregates)", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    aggs = load_aggregates(args.aggregates)
    name = Path(args.aggregates).stem
    out = args.out or str(Path(args.aggregates).parent)
    paths = emit_report(aggs, args.format, out, name, args.x)
    for k, v in sorted(paths.items()):
        print(f"{k}: {v}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    corpus = _load(args)["train"]
    results = run_all(corpus)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aucner", description="Two-task AUC-margin NER toolkit")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse corpora, build the vocabulary, print statistics")
    _corpus_args(p)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("sample", help="write partition manifests")
    _corpus_args(p)
    p.add_argument("--size", type=int, required=True, help="sentences, or the budget when --entity-pct is set")
    p.add_argument("--entity-pct", type=float, default=None)
    p.add_argument("--unit", choices=("tokens", "sentences"), default="tokens", help="budget unit with --entity-pct")
    p.add_argument("--tolerance", type=float, default=0.5)
    p.add_argument("--partitions", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="partitions.jsonl")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train and evaluate one model")
    _corpus_args(p)
    p.add_argument("--method", choices=LOSS_KINDS, default="AUC-2T")
    p.add_argument("--size", type=int)
    p.add_argument("--entity-pct", type=float, default=None)
    p.add_argument("--unit", choices=("tokens", "sentences"), default="tokens")
    p.add_argument("--manifest", help="take the partition from a manifest instead of sampling")
    p.add_argument("--index", type=int, default=0, help="partition index")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--lr-dual", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", help="write the best-dev parameters here")
    p.add_argument("--out", default="results/runs.jsonl", help="results file (appended)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run a full experiment spec")
    p.add_argument("--config", help="JSON experiment spec; flags override its values")
    p.add_argument("--corpus")
    p.add_argument("--name")
    p.add_argument("--method", nargs="+", choices=LOSS_KINDS)
    p.add_argument("--size", nargs="+", type=int)
    p.add_argument("--entity-pct", nargs="+", type=float)
    p.add_argument("--unit", choices=("tokens", "sentences"))
    p.add_argument("--lambda", dest="lam", nargs="+", type=float)
    p.add_argument("--lr-grid", nargs="+", type=float)
    p.add_argument("--partitions", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--aggregate", choices=("mean", "micro"))
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render aggregates as a table or curve")
    p.add_argument("--aggregates", required=True, help="aggregates/<name>.json written by sweep")
    p.add_argument("--format", choices=("table", "curve"), default="table")
    p.add_argument("--x", choices=("size", "pct", "lambda"), default=None, help="curve axis (default: the one that varies)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="run the oracle and property checks")
    _corpus_args(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
