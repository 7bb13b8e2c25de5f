"""Training-partition generators and bootstrap standard errors."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus
from .rng import make_rng


class CapacityError(ValueError):
    pass


class InfeasibleError(ValueError):
    def __init__(self, message: str, closest_pct: float):
        self.closest_pct = closest_pct
        super().__init__(f"{message} (closest achievable: {closest_pct:.2f}%)")


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionSpec:
    size: int
    unit: str = "sentences"  # or "tokens"
    target_entity_pct: float | None = None
    tolerance_pp: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("partition size must be >= 1")
        if self.unit not in ("sentences", "tokens"):
            raise ValueError(f"unknown size unit {self.unit!r}")
        if self.target_entity_pct is not None and not 0 < self.target_entity_pct < 100:
            raise ValueError("target entity percentage must lie in (0, 100)")


@dataclass(frozen=True)
class Partition:
    indices: tuple[int, ...]
    n_tokens: int
    n_entity_tokens: int
    spec: PartitionSpec | None = None

    @property
    def entity_pct(self) -> float:
        return 100.0 * self.n_entity_tokens / self.n_tokens if self.n_tokens else 0.0

    def __len__(self) -> int:
        return len(self.indices)

    def select(self, corpus: Corpus, split: str = "train") -> Corpus:
        return corpus.subset(self.indices, split)

    def to_record(self) -> dict:
        return {
            "seed": self.spec.seed if self.spec else None,
            "spec": asdict(self.spec) if self.spec else None,
            "indices": list(self.indices),
            "n_tokens": self.n_tokens,
            "n_entity_tokens": self.n_entity_tokens,
            "entity_pct": self.entity_pct,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Partition":
        spec = PartitionSpec(**rec["spec"]) if rec.get("spec") else None
        return cls(tuple(rec["indices"]), rec["n_tokens"], rec["n_entity_tokens"], spec)


def _make_partition(corpus: Corpus, indices: Iterable[int], spec: PartitionSpec | None) -> Partition:
    idx = tuple(int(i) for i in indices)
    n_tok = sum(len(corpus[i]) for i in idx)
    n_ent = sum(corpus[i].n_entity_tokens for i in idx)
    return Partition(idx, n_tok, n_ent, spec)


def sample_partition(corpus: Corpus, n_sentences: int, seed: int) -> Partition:
    """``n_sentences`` distinct sentences drawn uniformly without replacement."""
    if n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    if n_sentences > len(corpus):
        raise CapacityError(f"asked for {n_sentences} sentences from a corpus of {len(corpus)}")
    rng = make_rng(seed, "sample_partition")
    idx = rng.choice(len(corpus), size=n_sentences, replace=False)
    return _make_partition(corpus, sorted(idx.tolist()), PartitionSpec(n_sentences, seed=seed))


def _extreme_pct(lengths: np.ndarray, ents: np.ndarray, budget: int, unit: str, highest: bool) -> float:
    """Entity percentage reached by filling the budget with the densest (or
    sparsest) sentences first."""
    density = ents / lengths
    order = np.lexsort((lengths, -density if highest else density))
    tok = ent = used = 0
    for i in order:
        cost = 1 if unit == "sentences" else lengths[i]
        if used + cost > budget:
            if unit == "tokens":
                continue
            break
        used += cost
        tok += lengths[i]
        ent += ents[i]
    return 100.0 * ent / tok if tok else 0.0


def _repair(chosen, unused, lengths, ents, budget, unit, target, tol, max_iter=200, pool=400):
    """Local search once the greedy fill ends outside the band.

    Each round applies the single swap (or, under a token budget, single
    addition or removal) that brings the percentage closest to the target,
    and stops once inside the band or when nothing improves. Candidates
    are the first ``pool`` unused sentences in shuffled order.
    """
    chosen = list(chosen)
    unused = list(unused)
    for _ in range(max_iter):
        c = np.array(chosen, dtype=np.int64)
        u = np.array(unused[:pool], dtype=np.int64)
        tok, ent = int(lengths[c].sum()), int(ents[c].sum())
        best = abs(100.0 * ent / tok - target) if tok else np.inf
        if best <= tol or not len(u):
            break
        move = None
        # swaps: drop chosen i, add unused j
        nt = tok - lengths[c][:, None] + lengths[u][None, :]
        ne = ent - ents[c][:, None] + ents[u][None, :]
        ok = nt > 0
        if unit == "tokens":
            ok &= nt <= budget
        with np.errstate(divide="ignore", invalid="ignore"):
            gap = np.where(ok, np.abs(100.0 * ne / nt - target), np.inf)
        i, j = np.unravel_index(np.argmin(gap), gap.shape)
        if gap[i, j] < best:
            best, move = gap[i, j], ("swap", int(i), int(j))
        if unit == "tokens":
            at = tok + lengths[u]
            add = np.where(at <= budget, np.abs(100.0 * (ent + ents[u]) / at - target), np.inf)
            j = int(np.argmin(add))
            if add[j] < best:
                best, move = add[j], ("add", None, j)
            if len(c) > 1:
                rt = tok - lengths[c]
                drop = np.abs(100.0 * (ent - ents[c]) / rt - target)
                i = int(np.argmin(drop))
                if drop[i] < best:
                    best, move = drop[i], ("drop", i, None)
        if move is None:
            break
        kind, i, j = move
        if kind in ("swap", "drop"):
            unused.append(chosen.pop(i))
        if kind in ("swap", "add"):
            chosen.append(unused.pop(j))
    return chosen


def sample_imbalanced(
    corpus: Corpus,
    budget: int,
    target_entity_pct: float,
    tolerance_pp: float = 0.5,
    seed: int = 0,
    unit: str = "tokens",
) -> Partition:
    """Sample sentences whose pooled entity-token share hits a target.

    Sentences are shuffled by ``seed`` and split into entity-bearing and
    entity-free queues. At each step the queue that moves the running
    entity percentage toward the target is tried first; the first sentence
    in it that fits the remaining budget and keeps the running percentage
    at or below ``target + tolerance`` is accepted, otherwise the other
    queue is tried. Construction stops when the budget is used up or no
    sentence fits; if the result is outside the band, a swap-based local
    search tries to pull it back in. ``budget`` counts tokens (``unit="tokens"``) or
    sentences (``unit="sentences"``).

    Raises :class:`InfeasibleError` when the final percentage is off target
    by more than the tolerance.
    """
    spec = PartitionSpec(budget, unit, target_entity_pct, tolerance_pp, seed)
    if unit == "tokens" and budget < 50:
        raise ValueError("token budget must be >= 50")
    lengths = np.array([len(s) for s in corpus], dtype=np.int64)
    ents = np.array([s.n_entity_tokens for s in corpus], dtype=np.int64)
    upper = target_entity_pct + tolerance_pp

    rng = make_rng(seed, "sample_imbalanced")
    order = rng.permutation(len(corpus))
    queues = {
        True: [int(i) for i in order if ents[i] > 0],
        False: [int(i) for i in order if ents[i] == 0],
    }
    if not queues[True] or not queues[False]:
        raise ValueError("corpus needs both entity-bearing and entity-free sentences")

    chosen: list[int] = []
    tok = ent = used = 0

    def fits(i: int) -> bool:
        cost = 1 if unit == "sentences" else lengths[i]
        if used + cost > budget:
            return False
        return 100.0 * (ent + ents[i]) <= upper * (tok + lengths[i])

    while used < budget:
        pct = 100.0 * ent / tok if tok else 0.0
        prefer = bool(pct < target_entity_pct)
        pick = None
        for cls in (prefer, not prefer):
            q = queues[cls]
            for j, i in enumerate(q):
                if fits(i):
                    pick = q.pop(j)
                    break
            if pick is not None:
                break
        if pick is None:
            break
        chosen.append(pick)
        tok += int(lengths[pick])
        ent += int(ents[pick])
        used += 1 if unit == "sentences" else int(lengths[pick])

    realized = 100.0 * ent / tok if tok else 0.0
    if abs(realized - target_entity_pct) > tolerance_pp:
        unused = queues[True] + queues[False]
        chosen = _repair(chosen, unused, lengths, ents, budget, unit, target_entity_pct, tolerance_pp)
        tok = int(lengths[chosen].sum())
        ent = int(ents[chosen].sum())
        realized = 100.0 * ent / tok if tok else 0.0
    if abs(realized - target_entity_pct) > tolerance_pp:
        highest = target_entity_pct > realized
        closest = _extreme_pct(lengths, ents, budget, unit, highest)
        if highest:
            closest = max(closest, realized)
        else:
            closest = min(closest, realized)
        raise InfeasibleError(
            f"cannot realize {target_entity_pct}% entity tokens within "
            f"{tolerance_pp} pp at budget {budget} {unit}; reached {realized:.2f}%",
            closest,
        )
    return _make_partition(corpus, sorted(chosen), spec)


def bootstrap_se(scores: Sequence[float], n_resamples: int = 1000, seed: int = 0) -> float:
    """Standard deviation of resampled means (non-parametric bootstrap)."""
    x = np.asarray(scores, dtype=float)
    if x.size == 0:
        raise EmptyInputError("no scores to bootstrap")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    if np.all(x == x[0]):
        return 0.0
    rng = make_rng(seed, "bootstrap")
    idx = rng.integers(0, x.size, size=(n_resamples, x.size))
    return float(x[idx].mean(axis=1).std())


def write_manifest(path, partitions: Iterable[Partition]) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for p in partitions:
            f.write(json.dumps(p.to_record(), sort_keys=True) + "\n")


def read_manifest(path) -> list[Partition]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [Partition.from_record(json.loads(line)) for line in lines if line.strip()]
