"""Experiment orchestration: partitions, runs, aggregation and reports.

An experiment is the cross product of methods, training sizes, optional
entity-percentage targets and (for the AUC methods) lambda values, with a
fixed number of random partitions per cell. Partitions depend on the cell's
size and percentage and on the partition index but not on the method, so
every method is trained on the same partitions and comparisons are paired.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, Sentence, build_vocab, read_conll
from .model import ModelConfig, save_checkpoint
from .objectives import DEFAULT_LAMBDA
from .rng import derive_seed, make_rng
from .sampling import Partition, bootstrap_se, sample_imbalanced, sample_partition
from .training import LOSS_KINDS, TrainConfig, train

log = logging.getLogger(__name__)

AUC_METHODS = ("AUC-2T", "COMAUC-2T")
DEFAULT_SIZES = (20, 50, 100, 150, 200, 250, 300, 350, 400, 450, 500, 1000)
DEFAULT_PCTS = (1.0, 2.0, 5.0, 10.0, 20.0)
DEFAULT_LAMBDAS = (0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0)
Z95 = 1.96
SPLIT_SUFFIXES = ("", ".txt", ".conll", ".bio", ".tsv")


class ExperimentError(RuntimeError):
    pass


class EmptyAggregateError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "experiment"
    # directory holding train/dev/test CoNLL files, or "synthetic"
    corpus: str = "synthetic"
    methods: tuple[str, ...] = ("CE", "CE-2T", "AUC-2T")
    sizes: tuple[int, ...] = (20, 50)
    # empty: partitions are uniform samples of ``size`` sentences
    entity_pcts: tuple[float, ...] = ()
    lambdas: tuple[float, ...] = (DEFAULT_LAMBDA,)
    partitions: int = 10
    seed: int = 0
    out: str = "results"
    budget_unit: str = "tokens"
    tolerance_pp: float = 0.5
    tag_column: int = -1
    keep_type: str | None = None
    min_count: int = 2
    epochs: int = 30
    batch_sentences: int = 8
    lr_primal: float = 0.1
    lr_dual: float = 0.1
    momentum: float = 0.9
    margin: float = 1.0
    # nonempty: lr_primal is chosen per cell by mean dev F1 on extra partitions
    lr_grid: tuple[float, ...] = ()
    tune_partitions: int = 2
    aggregate: str = "mean"
    bootstrap_resamples: int = 1000
    checkpoints: bool = False
    synthetic_seed: int = 13

    def __post_init__(self):
        for name in ("methods", "sizes", "lambdas"):
            if not getattr(self, name):
                raise ValueError(f"{name} grid is empty")
        bad = [m for m in self.methods if m not in LOSS_KINDS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {LOSS_KINDS}")
        if self.partitions < 1:
            raise ValueError("partitions must be >= 1")
        if self.budget_unit not in ("tokens", "sentences"):
            raise ValueError(f"unknown budget unit {self.budget_unit!r}")
        if self.aggregate not in ("mean", "micro"):
            raise ValueError(f"unknown aggregate mode {self.aggregate!r}")
        if self.lr_grid and self.tune_partitions < 1:
            raise ValueError("tune_partitions must be >= 1 when lr_grid is set")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown spec keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def cells(self) -> list["Cell"]:
        pcts = self.entity_pcts or (None,)
        out = []
        for method in self.methods:
            lams = self.lambdas if method in AUC_METHODS else (None,)
            for size in self.sizes:
                for pct in pcts:
                    for lam in lams:
                        out.append(Cell(method, int(size), None if pct is None else float(pct), None if lam is None else float(lam)))
        return sorted(out, key=Cell.key)


def load_spec(path) -> ExperimentSpec:
    return ExperimentSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Cell:
    method: str
    size: int
    pct: float | None
    lam: float | None

    def key(self):
        return (self.method, self.size, -1.0 if self.pct is None else self.pct, -1.0 if self.lam is None else self.lam)

    def label(self) -> str:
        parts = [self.method, f"n{self.size}"]
        if self.pct is not None:
            parts.append(f"pct{self.pct:g}")
        if self.lam is not None:
            parts.append(f"lam{self.lam:g}")
        return "_".join(parts)


@dataclass
class AggregateCell:
    method: str
    size: int
    pct: float | None
    lam: float | None
    precision: float
    recall: float
    f1: float
    se_p: float
    se_r: float
    se_f1: float
    n: int
    lr: float
    f1_runs: list[float] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateCell":
        return cls(**d)


@dataclass
class ExperimentResult:
    cells: list[AggregateCell]
    records: list[dict]
    lr_choice: dict[str, float]
    n_failed: int
    paths: dict[str, str]


# --------------------------------------------------------------------------
# corpora


def _find_split(root: Path, name: str) -> Path:
    for suffix in SPLIT_SUFFIXES:
        p = root / f"{name}{suffix}"
        if p.is_file():
            return p
    raise FileNotFoundError(f"no {name} split in {root} (tried suffixes {SPLIT_SUFFIXES})")


def load_corpora(corpus: str, tag_column: int = -1, keep_type: str | None = None, synthetic_seed: int = 13) -> dict[str, Corpus]:
    """train/dev/test corpora from a directory, or the built-in generator."""
    if corpus == "synthetic":
        from .synthetic import SyntheticConfig, make_splits

        splits = make_splits(SyntheticConfig(seed=synthetic_seed))
        if keep_type is not None:
            splits = {k: Corpus(tuple(_keep(s, keep_type) for s in c), c.split) for k, c in splits.items()}
        return splits
    root = Path(corpus)
    return {name: read_conll(_find_split(root, name), tag_column, name, keep_type) for name in ("train", "dev", "test")}


def _keep(sentence, keep_type):
    tags = tuple(t if t == "O" or t[2:] == keep_type else "O" for t in sentence.tags)
    return Sentence(sentence.tokens, tags)


# --------------------------------------------------------------------------
# single runs

# set once per worker process; corpora are read-only after loading
_CTX: dict = {}


def _init_worker(spec_dict: dict) -> None:
    spec = ExperimentSpec.from_dict(spec_dict)
    _CTX["spec"] = spec
    _CTX["corpora"] = load_corpora(spec.corpus, spec.tag_column, spec.keep_type, spec.synthetic_seed)
    _CTX["partitions"] = {}


def make_partition(spec: ExperimentSpec, train_corpus: Corpus, size: int, pct: float | None, index: int, purpose: str = "eval") -> Partition:
    seed = derive_seed(spec.seed, "partition", purpose, size, pct, index)
    if pct is None:
        return sample_partition(train_corpus, size, seed)
    return sample_imbalanced(train_corpus, size, pct, spec.tolerance_pp, seed, spec.budget_unit)


def _partition(size, pct, index, purpose) -> Partition:
    key = (size, pct, index, purpose)
    cache = _CTX["partitions"]
    if key not in cache:
        cache[key] = make_partition(_CTX["spec"], _CTX["corpora"]["train"], size, pct, index, purpose)
    return cache[key]


def _run_job(job: tuple) -> dict:
    cell, index, lr, purpose = job
    spec: ExperimentSpec = _CTX["spec"]
    corpora = _CTX["corpora"]
    seed = derive_seed(spec.seed, "train", cell.method, cell.size, cell.pct, cell.lam, purpose, index)
    out = {
        "method": cell.method, "size": cell.size, "pct": cell.pct, "lambda": cell.lam,
        "index": index, "purpose": purpose, "lr": lr, "seed": seed,
    }
    try:
        part = _partition(cell.size, cell.pct, index, purpose)
        train_corpus = part.select(corpora["train"])
        vocab = build_vocab(train_corpus, spec.min_count)
        config = TrainConfig(
            loss_kind=cell.method,
            lam=DEFAULT_LAMBDA if cell.lam is None else cell.lam,
            margin=spec.margin,
            lr_primal=lr,
            lr_dual=spec.lr_dual,
            momentum=spec.momentum,
            epochs=spec.epochs,
            batch_sentences=spec.batch_sentences,
            seed=seed,
        )
        test = corpora["test"] if purpose == "eval" else None
        rec = train(config, train_corpus, corpora["dev"], test, vocab, partition=part.to_record())
        if spec.checkpoints and purpose == "eval":
            path = Path(spec.out) / "checkpoints" / spec.name / f"{cell.label()}_{index}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(path, rec.params, ModelConfig(**rec.model_config), vocab.digest(), {"run_seed": seed})
            rec.checkpoint = str(path)
        out.update(status="ok", record=rec.to_dict())
    except Exception as e:  # recorded per run, never aborts the sweep
        log.warning("run %s #%d failed: %s", cell.label(), index, e)
        out.update(status="failed", error=f"{type(e).__name__}: {e}")
    return out


def _execute(spec: ExperimentSpec, jobs: list[tuple], n_jobs: int, sink) -> list[dict]:
    results = []
    if n_jobs <= 1:
        if _CTX.get("spec") != spec:
            _init_worker(spec.to_dict())
        for job in jobs:
            r = _run_job(job)
            sink(r)
            results.append(r)
        return results
    with ProcessPoolExecutor(n_jobs, initializer=_init_worker, initargs=(spec.to_dict(),)) as ex:
        for r in ex.map(_run_job, jobs, chunksize=1):
            sink(r)
            results.append(r)
    return results


# --------------------------------------------------------------------------
# aggregation


def _micro(records: Sequence[dict]) -> tuple[float, float, float]:
    tp = sum(r["record"]["test"]["tp"] for r in records)
    npred = sum(r["record"]["test"]["n_pred"] for r in records)
    ngold = sum(r["record"]["test"]["n_gold"] for r in records)
    p = tp / npred if npred else 0.0
    rc = tp / ngold if ngold else 0.0
    return p, rc, (2 * p * rc / (p + rc) if p + rc else 0.0)


def _micro_se(records, n_resamples, seed) -> tuple[float, float, float]:
    if len(records) < 2:
        return 0.0, 0.0, 0.0
    rng = make_rng(seed, "bootstrap")
    draws = np.array([_micro([records[i] for i in rng.integers(0, len(records), len(records))]) for _ in range(n_resamples)])
    return tuple(float(x) for x in draws.std(axis=0))


def aggregate(spec: ExperimentSpec, cell: Cell, runs: Sequence[dict], lr: float) -> AggregateCell:
    """Mean (or pooled) test metrics of one cell with bootstrap SEs.

    ``runs`` may arrive in any order; they are sorted by partition index.
    """
    runs = sorted(runs, key=lambda r: r["index"])
    ok = [r for r in runs if r["status"] == "ok"]
    failures = [{"index": r["index"], "error": r["error"]} for r in runs if r["status"] != "ok"]
    if not ok:
        raise ExperimentError(f"every run of cell {cell.label()} failed: {failures[0]['error'] if failures else 'no runs'}")
    cols = {k: [r["record"]["test"][k] for r in ok] for k in ("precision", "recall", "f1")}
    bseed = derive_seed(spec.seed, "bootstrap", *cell.key())
    if spec.aggregate == "mean":
        p, rc, f1 = (float(np.mean(cols[k])) for k in ("precision", "recall", "f1"))
        se = [bootstrap_se(cols[k], spec.bootstrap_resamples, derive_seed(bseed, k)) for k in ("precision", "recall", "f1")]
    else:
        p, rc, f1 = _micro(ok)
        se = list(_micro_se(ok, spec.bootstrap_resamples, bseed))
    return AggregateCell(
        cell.method, cell.size, cell.pct, cell.lam, p, rc, f1, se[0], se[1], se[2],
        len(ok), lr, [float(x) for x in cols["f1"]], failures,
    )


def _select_lr(spec: ExperimentSpec, cell: Cell, runs: Sequence[dict]) -> float:
    """Grid learning rate with the highest mean dev F1 (first in grid order on ties)."""
    best_lr, best = spec.lr_grid[0], -1.0
    for lr in spec.lr_grid:
        scores = [r["record"]["dev_best"]["f1"] for r in runs if r["lr"] == lr and r["status"] == "ok"]
        score = float(np.mean(scores)) if scores else -1.0
        if score > best:
            best_lr, best = lr, score
    return best_lr


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ExperimentResult:
    """Sample, train and evaluate every (cell, partition); aggregate; write files.

    Files under ``spec.out``: ``runs/<name>.jsonl`` (one record per run, in
    completion order), ``aggregates/<name>.json`` plus the table and curve
    reports. The aggregate file depends only on the spec, not on ``jobs``
    or completion order.
    """
    out = Path(spec.out)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    (out / "aggregates").mkdir(parents=True, exist_ok=True)
    runs_path = out / "runs" / f"{spec.name}.jsonl"
    runs_path.write_text("", encoding="utf-8")
    cells = spec.cells()

    with runs_path.open("a", encoding="utf-8") as fh:
        def sink(r):
            fh.write(json.dumps(r, sort_keys=True) + "\n")
            fh.flush()

        lr_choice = {}
        records = []
        if spec.lr_grid:
            tune_jobs = [(c, i, lr, "tune") for c in cells for lr in spec.lr_grid for i in range(spec.tune_partitions)]
            tuned = _execute(spec, tune_jobs, jobs, sink)
            records += tuned
            for c in cells:
                lr_choice[c.label()] = _select_lr(spec, c, [r for r in tuned if _cell_of(r) == c])
        eval_jobs = [(c, i, lr_choice.get(c.label(), spec.lr_primal), "eval") for c in cells for i in range(spec.partitions)]
        evaluated = _execute(spec, eval_jobs, jobs, sink)
        records += evaluated

    n_failed = sum(r["status"] != "ok" for r in evaluated)
    if n_failed:
        log.warning("%d of %d runs failed; see %s", n_failed, len(evaluated), runs_path)
    aggs = [
        aggregate(spec, c, [r for r in evaluated if _cell_of(r) == c], lr_choice.get(c.label(), spec.lr_primal))
        for c in cells
    ]
    spec_view = {k: v for k, v in spec.to_dict().items() if k != "out"}
    agg_path = out / "aggregates" / f"{spec.name}.json"
    agg_path.write_text(_dumps({"spec": spec_view, "lr_choice": lr_choice, "n_failed": n_failed, "cells": [a.to_dict() for a in aggs]}), encoding="utf-8")
    paths = {"runs": str(runs_path), "aggregates": str(agg_path)}
    for fmt in ("table", "curve"):
        try:
            paths.update(emit_report(aggs, fmt, out / "aggregates", spec.name))
        except ValueError as e:
            log.info("no %s report: %s", fmt, e)
    return ExperimentResult(aggs, records, lr_choice, n_failed, paths)


def _cell_of(r: dict) -> Cell:
    return Cell(r["method"], r["size"], r["pct"], r["lambda"])


def load_aggregates(path) -> list[AggregateCell]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [AggregateCell.from_dict(c) for c in doc["cells"]]


# --------------------------------------------------------------------------
# reports

TABLE_COLUMNS = ("method", "size", "pct", "lambda", "precision", "recall", "f1", "se_p", "se_r", "se_f1", "n")
CURVE_COLUMNS = ("method", "x", "mean", "lo95", "hi95")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _axis(v) -> str:
    return "" if v is None else f"{v:g}"


def _table_rows(aggs: Iterable[AggregateCell]) -> list[list[str]]:
    rows = []
    for a in aggs:
        rows.append([a.method, str(a.size), _axis(a.pct), _axis(a.lam)]
                    + [_fmt(x) for x in (a.precision, a.recall, a.f1, a.se_p, a.se_r, a.se_f1)] + [str(a.n)])
    return rows


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def curve_axis(aggs: Sequence[AggregateCell]) -> str:
    """The grid dimension that varies: pct, then lambda, then size."""
    for axis, get in (("pct", lambda a: a.pct), ("lambda", lambda a: a.lam), ("size", lambda a: a.size)):
        if len({get(a) for a in aggs if get(a) is not None}) > 1:
            return axis
    return "size"


def emit_report(aggs: Sequence[AggregateCell], fmt: str, out_dir, name: str = "report", x: str | None = None) -> dict[str, str]:
    """Write a table (text + CSV) or a curve CSV; returns the written paths.

    Curve rows are ``(method, x, mean, lo95, hi95)`` with the band
    ``mean +/- 1.96 SE`` of F1; every method must have one cell per x.
    """
    aggs = list(aggs)
    if not aggs:
        raise EmptyAggregateError("no aggregate cells to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "table":
        rows = _table_rows(aggs)
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(TABLE_COLUMNS)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(TABLE_COLUMNS, widths)).rstrip()]
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        txt = out_dir / f"{name}_table.txt"
        csv_path = out_dir / f"{name}_table.csv"
        txt.write_text("\n".join(lines) + "\n", encoding="utf-8")
        csv_path.write_text(_csv(TABLE_COLUMNS, rows), encoding="utf-8")
        return {"table_txt": str(txt), "table_csv": str(csv_path)}
    if fmt == "curve":
        x = x or curve_axis(aggs)
        get = {"pct": lambda a: a.pct, "lambda": lambda a: a.lam, "size": lambda a: a.size}[x]
        seen = set()
        rows = []
        for a in sorted(aggs, key=lambda a: (a.method, -1.0 if get(a) is None else get(a))):
            xv = get(a)
            if xv is None:
                continue
            if (a.method, xv) in seen:
                raise ValueError(f"several cells for method {a.method} at {x}={xv}; fix the other grid axes")
            seen.add((a.method, xv))
            rows.append([a.method, _axis(float(xv)), _fmt(a.f1), _fmt(a.f1 - Z95 * a.se_f1), _fmt(a.f1 + Z95 * a.se_f1)])
        if not rows:
            raise ValueError(f"no cell has a value on the {x} axis")
        path = out_dir / f"{name}_curve_{x}.csv"
        path.write_text(_csv(CURVE_COLUMNS, rows), encoding="utf-8")
        return {"curve_csv": str(path)}
    raise ValueError(f"unknown report format {fmt!r}")
