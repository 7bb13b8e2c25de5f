"""Linear-chain CRF over the collapsed (B, I, O) tag set."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rng import make_rng

K = 3


class EmptySequenceError(ValueError):
    pass


@dataclass
class CrfParams:
    """``trans[i, j]`` scores tag ``i`` followed by tag ``j``."""

    trans: np.ndarray
    start: np.ndarray
    stop: np.ndarray

    @classmethod
    def zeros(cls, k: int = K) -> "CrfParams":
        return cls(np.zeros((k, k)), np.zeros(k), np.zeros(k))

    @classmethod
    def random(cls, seed: int, scale: float = 1.0, k: int = K) -> "CrfParams":
        rng = make_rng(seed, "crf")
        return cls(
            rng.normal(0, scale, (k, k)),
            rng.normal(0, scale, k),
            rng.normal(0, scale, k),
        )

    def items(self):
        yield "trans", self.trans
        yield "start", self.start
        yield "stop", self.stop

    def copy(self) -> "CrfParams":
        return CrfParams(self.trans.copy(), self.start.copy(), self.stop.copy())

    def zeros_like(self) -> "CrfParams":
        return CrfParams(np.zeros_like(self.trans), np.zeros_like(self.start), np.zeros_like(self.stop))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for _, v in self.items())


def _logsumexp(x, axis):
    mx = np.max(x, axis=axis, keepdims=True)
    out = mx + np.log(np.sum(np.exp(x - mx), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def path_score(emissions: np.ndarray, crf: CrfParams, tags: Sequence[int]) -> float:
    tags = list(tags)
    s = crf.start[tags[0]] + crf.stop[tags[-1]]
    s += sum(emissions[t, y] for t, y in enumerate(tags))
    s += sum(crf.trans[tags[t], tags[t + 1]] for t in range(len(tags) - 1))
    return float(s)


def _forward_backward(emissions: np.ndarray, crf: CrfParams):
    L = len(emissions)
    fwd = np.empty_like(emissions)
    bwd = np.empty_like(emissions)
    fwd[0] = crf.start + emissions[0]
    for t in range(1, L):
        fwd[t] = _logsumexp(fwd[t - 1][:, None] + crf.trans, axis=0) + emissions[t]
    bwd[L - 1] = crf.stop
    for t in range(L - 2, -1, -1):
        bwd[t] = _logsumexp(crf.trans + (emissions[t + 1] + bwd[t + 1])[None, :], axis=1)
    log_z = float(_logsumexp(fwd[L - 1] + crf.stop, axis=0))
    return fwd, bwd, log_z


def log_partition(emissions: np.ndarray, crf: CrfParams) -> float:
    emissions = np.asarray(emissions, dtype=float)
    if len(emissions) == 0:
        raise EmptySequenceError("empty sequence")
    return _forward_backward(emissions, crf)[2]


@dataclass
class CrfOutput:
    value: float
    grad_emissions: np.ndarray
    grad: CrfParams
    log_z: float


def crf_nll(emissions, crf: CrfParams, gold: Sequence[int]) -> CrfOutput:
    """Negative log-likelihood ``log Z - score(gold)`` and its gradients.

    Gradients are expected feature counts under the model (from the
    forward-backward marginals) minus the gold path's counts.
    """
    emissions = np.asarray(emissions, dtype=float)
    gold = np.asarray(gold, dtype=np.int64)
    L = len(emissions)
    if L == 0:
        raise EmptySequenceError("empty sequence")
    if len(gold) != L:
        raise ValueError(f"{L} emission rows for {len(gold)} gold tags")

    fwd, bwd, log_z = _forward_backward(emissions, crf)
    node = np.exp(fwd + bwd - log_z)  # (L, K) marginals
    g_trans = np.zeros_like(crf.trans)
    for t in range(L - 1):
        pair = fwd[t][:, None] + crf.trans + (emissions[t + 1] + bwd[t + 1])[None, :] - log_z
        g_trans += np.exp(pair)

    g_em = node.copy()
    g_em[np.arange(L), gold] -= 1.0
    g_start = node[0].copy()
    g_start[gold[0]] -= 1.0
    g_stop = node[L - 1].copy()
    g_stop[gold[-1]] -= 1.0
    np.subtract.at(g_trans, (gold[:-1], gold[1:]), 1.0)

    value = log_z - path_score(emissions, crf, gold)
    return CrfOutput(value, g_em, CrfParams(g_trans, g_start, g_stop), log_z)


def crf_viterbi(emissions, crf: CrfParams) -> list[int]:
    """Highest-scoring tag path; ties go to the lowest tag index."""
    emissions = np.asarray(emissions, dtype=float)
    L = len(emissions)
    if L == 0:
        raise EmptySequenceError("empty sequence")
    score = crf.start + emissions[0]
    back = np.zeros((L, emissions.shape[1]), dtype=np.int64)
    for t in range(1, L):
        cand = score[:, None] + crf.trans
        # argmax returns the first maximal index
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(cand.shape[1])] + emissions[t]
    score = score + crf.stop
    best = int(np.argmax(score))
    path = [best]
    for t in range(L - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    return path[::-1]
