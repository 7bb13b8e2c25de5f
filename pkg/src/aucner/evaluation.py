"""Turning scores into BIO tags and scoring them at the entity level."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .corpus import split_tag


class ContractError(ValueError):
    pass


class UndefinedAUCError(ValueError):
    pass


class ChunkSpan(NamedTuple):
    """Half-open token span ``[start, end)``; ``etype`` is None when untyped."""

    start: int
    end: int
    etype: str | None = None


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    n_pred: int
    n_gold: int

    @classmethod
    def from_counts(cls, tp: int, n_pred: int, n_gold: int) -> "Metrics":
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_gold if n_gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f1, tp, n_pred, n_gold)

    def to_dict(self) -> dict:
        return asdict(self)


def threshold_predictions(h, tau: float = 0.5) -> np.ndarray:
    """+1 where ``h >= tau`` (boundary inclusive), else -1."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    h = np.asarray(h, dtype=float)
    return np.where(h >= tau, 1, -1).astype(np.int8)


def combine_predictions(y_en_hat, y_be_hat) -> tuple[list[str], int]:
    """Merge entity/begin decisions into BIO tags.

    (+1, +1) -> B, (+1, -1) -> I, anything with en = -1 -> O. A token predicted
    as a beginning but not inside an entity is inconsistent; it becomes O and
    is counted in the second return value.
    """
    if len(y_en_hat) != len(y_be_hat):
        raise ContractError(f"length mismatch: {len(y_en_hat)} vs {len(y_be_hat)}")
    tags: list[str] = []
    inconsistent = 0
    for en, be in zip(y_en_hat, y_be_hat):
        if en == 1:
            tags.append("B" if be == 1 else "I")
        else:
            if be == 1:
                inconsistent += 1
            tags.append("O")
    return tags, inconsistent


def extract_chunks(tags: Sequence[str], strict: bool = False, typed: bool = False) -> set[ChunkSpan]:
    """Entity spans of a BIO sequence.

    A chunk opens at ``B`` or, in the default lenient mode, at an ``I`` that
    cannot continue the previous token (after ``O``, at sentence start, or
    after a different type when ``typed``). In strict mode such an ``I`` is
    dropped. Types are compared, and reported, only when ``typed`` is set.
    """
    chunks: set[ChunkSpan] = set()
    start: int | None = None
    ctype: str | None = None
    for i, tag in enumerate(tags):
        prefix, etype = split_tag(tag)
        if not typed:
            etype = None
        if prefix == "I" and start is not None and etype == ctype:
            continue
        if start is not None:
            chunks.add(ChunkSpan(start, i, ctype))
            start = None
        if prefix == "B" or (prefix == "I" and not strict):
            start, ctype = i, etype
    if start is not None:
        chunks.add(ChunkSpan(start, len(tags), ctype))
    return chunks


def entity_prf(
    gold: Sequence[Sequence[str]],
    pred: Sequence[Sequence[str]],
    typed: bool = False,
    strict: bool = False,
) -> Metrics:
    """Exact-match entity precision/recall/F1 pooled over a corpus."""
    if len(gold) != len(pred):
        raise ContractError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    tp = n_pred = n_gold = 0
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ContractError(f"sentence {i}: {len(g)} gold tags vs {len(p)} predicted")
        gc = extract_chunks(g, strict=strict, typed=typed)
        pc = extract_chunks(p, strict=strict, typed=typed)
        tp += len(gc & pc)
        n_pred += len(pc)
        n_gold += len(gc)
    return Metrics.from_counts(tp, n_pred, n_gold)


def dump_chunks(sentences: Iterable[Sequence[str]], **kwargs) -> str:
    """Debug listing, one ``sentence-id start end`` line per span."""
    lines = []
    for sid, tags in enumerate(sentences):
        for span in sorted(extract_chunks(tags, **kwargs)):
            lines.append(f"{sid}\t{span.start}\t{span.end}")
    return "\n".join(lines) + ("\n" if lines else "")


def wmw_auc(scores, labels) -> float:
    """Wilcoxon-Mann-Whitney AUC with ties counted as one half.

    Uses midranks, so the result equals the pairwise definition exactly
    (up to float rounding of the rank sum).
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ContractError("scores and labels differ in shape")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC needs at least one positive and one negative")

    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    # midranks (1-based) over tie groups, doubled to stay in integers
    boundaries = np.flatnonzero(np.diff(ss)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(ss)]))
    ranks2 = np.empty(len(ss), dtype=np.int64)
    ranks2[order] = np.repeat(starts + ends + 1, ends - starts)
    # U = sum of positive ranks - n_pos(n_pos+1)/2, all doubled
    u2 = int(ranks2[pos].sum()) - n_pos * (n_pos + 1)
    return u2 / (2.0 * n_pos * n_neg)
