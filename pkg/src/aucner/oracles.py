"""Slow reference implementations used to cross-check the fast ones.

Nothing here is used for training; the verify suite and the tests compare
the production code against these.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np


def brute_path_scores(emissions, trans, start, stop) -> dict[tuple[int, ...], float]:
    """Score of every one of the K^L tag paths."""
    emissions = np.asarray(emissions, dtype=float)
    L, K = emissions.shape
    out = {}
    for path in itertools.product(range(K), repeat=L):
        s = start[path[0]] + stop[path[-1]]
        for t, y in enumerate(path):
            s += emissions[t, y]
            if t:
                s += trans[path[t - 1], y]
        out[path] = float(s)
    return out


def brute_log_partition(emissions, trans, start, stop) -> float:
    scores = np.array(list(brute_path_scores(emissions, trans, start, stop).values()))
    mx = scores.max()
    return float(mx + np.log(np.exp(scores - mx).sum()))


def brute_best_path(emissions, trans, start, stop) -> tuple[tuple[int, ...], float]:
    scores = brute_path_scores(emissions, trans, start, stop)
    best = max(scores, key=lambda p: scores[p])
    return best, scores[best]


def scan_chunks(tags: Sequence[str]) -> set[tuple[int, int]]:
    """Lenient chunk spans by a character-level state machine.

    Written independently of the production extractor: each token is
    classified as opening, continuing or closing a span.
    """
    spans = set()
    open_at = None
    for i, tag in enumerate(list(tags) + ["O"]):
        head = tag[:1]
        if head == "B" or head == "O" or (head == "I" and open_at is None):
            if open_at is not None:
                spans.add((open_at, i))
                open_at = None
            if head in ("B", "I"):
                open_at = i
    return spans


def chunk_set_prf(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> tuple[float, float, float]:
    """Precision, recall and F1 from (sentence, start, end) set algebra."""
    g = {(k, s, e) for k, tags in enumerate(gold) for s, e in scan_chunks(tags)}
    p = {(k, s, e) for k, tags in enumerate(pred) for s, e in scan_chunks(tags)}
    tp = len(g & p)
    prec = tp / len(p) if p else 0.0
    rec = tp / len(g) if g else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1


def pairwise_auc(scores, labels) -> float:
    """Quadratic-time WMW estimate with ties counted as one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels != 1]
    total = 0.0
    for sp in pos:
        for sn in neg:
            total += 1.0 if sp > sn else 0.5 if sp == sn else 0.0
    return total / (len(pos) * len(neg))


def numeric_grad(f: Callable[[], float], arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr, dtype=float)
    flat = arr.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gf[i] = (up - down) / (2 * eps)
    return g


def relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    a = np.asarray(analytic, dtype=float).ravel()
    n = np.asarray(numeric, dtype=float).ravel()
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), floor))


def random_strict_bio(rng: np.random.Generator, length: int, p_begin: float = 0.25, p_continue: float = 0.5) -> list[str]:
    """Random strictly valid BIO sequence (no I after O)."""
    tags = []
    for _ in range(length):
        inside = bool(tags) and tags[-1] != "O"
        if inside and rng.random() < p_continue:
            tags.append("I")
        elif rng.random() < p_begin:
            tags.append("B")
        else:
            tags.append("O")
    return tags


def random_lenient_bio(rng: np.random.Generator, length: int) -> list[str]:
    """Any sequence over {B, I, O}, including I after O."""
    return [("B", "I", "O")[i] for i in rng.integers(0, 3, size=length)]
