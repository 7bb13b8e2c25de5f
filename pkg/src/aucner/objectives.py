"""Token-level training losses and their gradients.

Each loss returns its value together with the gradient with respect to the
quantity it consumes; the ``grad_wrt`` docstring line names that quantity so
the caller can route it to the right slot of :class:`aucner.model.HeadGrads`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import TwoTaskLabels

EPS = 1e-12


class EmptyBatchError(ValueError):
    pass


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray
    clamped: int = 0


def ce_multiclass(probs: np.ndarray, gold: Sequence[int]) -> LossOutput:
    """Mean token negative log-likelihood of the gold class.

    grad_wrt: pre-softmax logits, ``(p - onehot) / l``.
    """
    probs = np.asarray(probs, dtype=float)
    gold = np.asarray(gold, dtype=np.int64)
    if len(probs) != len(gold):
        raise ValueError(f"{len(probs)} distributions for {len(gold)} gold tags")
    n = len(gold)
    pg = probs[np.arange(n), gold]
    clamped = int(np.sum(pg < EPS))
    value = float(-np.mean(np.log(np.maximum(pg, EPS))))
    grad = probs.copy()
    grad[np.arange(n), gold] -= 1.0
    return LossOutput(value, grad / n, clamped)


def _bce(h, y):
    g = (np.asarray(y) == 1).astype(float)
    hc = np.clip(h, EPS, 1.0 - EPS)
    clamped = int(np.sum((h < EPS) | (h > 1.0 - EPS)))
    value = float(-np.mean(g * np.log(hc) + (1.0 - g) * np.log(1.0 - hc)))
    return value, (h - g) / len(h), clamped


@dataclass
class TwoTaskOutput:
    value: float
    grad_en: np.ndarray
    grad_be: np.ndarray
    clamped: int = 0


def bce_two_task(h_en, h_be, labels: TwoTaskLabels) -> TwoTaskOutput:
    """Unweighted sum of the mean binary cross-entropies of both tasks.

    grad_wrt: pre-sigmoid logits of each head.
    """
    h_en = np.asarray(h_en, dtype=float)
    h_be = np.asarray(h_be, dtype=float)
    if not len(h_en) == len(h_be) == len(labels):
        raise ValueError("score and label lengths differ")
    v_en, g_en, c_en = _bce(h_en, labels.y_en)
    v_be, g_be, c_be = _bce(h_be, labels.y_be)
    return TwoTaskOutput(v_en + v_be, g_en, g_be, c_en + c_be)


@dataclass
class AucState:
    """Auxiliary variables of the AUC-margin min-max objective for one task."""

    a: float = 0.0
    b: float = 0.0
    alpha: float = 0.0
    m: float = 1.0

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("margin must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


@dataclass
class AucOutput:
    value: float
    grad_h: np.ndarray
    grad_a: float
    grad_b: float
    grad_alpha: float
    has_pos: bool
    has_neg: bool

    @property
    def degenerate(self) -> bool:
        return not (self.has_pos and self.has_neg)


def auc_margin_loss(h, y, state: AucState) -> AucOutput:
    """AUC-margin loss of one binary task on a batch.

        mean_P (h - a)^2 + mean_N (h - b)^2 + 2 alpha (m - mean_P h + mean_N h) - alpha^2

    The squared terms are written in centred (variance) form so that the
    loss is bounded below in ``a`` and ``b`` and minimized at the class
    means. A batch missing one class keeps only the surviving terms; the
    gradient of the absent class's auxiliary variable is then 0.

    grad_wrt: scores ``h`` (post-sigmoid), plus ``a``, ``b``, ``alpha``.
    ``grad_alpha`` is the plain partial derivative; the optimizer ascends it.
    """
    h = np.asarray(h, dtype=float)
    y = np.asarray(y)
    if h.shape != y.shape:
        raise ValueError("scores and labels differ in shape")
    pos = y == 1
    neg = ~pos
    n_pos = int(pos.sum())
    n_neg = int(neg.sum())
    if n_pos == 0 and n_neg == 0:
        raise EmptyBatchError("batch has no tokens")

    a, b, alpha, m = state.a, state.b, state.alpha, state.m
    grad_h = np.zeros_like(h)
    value = 0.0
    gap = m
    grad_a = grad_b = 0.0
    if n_pos:
        hp = h[pos]
        mu_pos = hp.mean()
        value += np.mean((hp - a) ** 2)
        grad_h[pos] = (2.0 * (hp - a) - 2.0 * alpha) / n_pos
        grad_a = 2.0 * (a - mu_pos)
        gap -= mu_pos
    if n_neg:
        hn = h[neg]
        mu_neg = hn.mean()
        value += np.mean((hn - b) ** 2)
        grad_h[neg] = (2.0 * (hn - b) + 2.0 * alpha) / n_neg
        grad_b = 2.0 * (b - mu_neg)
        gap += mu_neg
    value += 2.0 * alpha * gap - alpha**2
    grad_alpha = 2.0 * gap - 2.0 * alpha
    return AucOutput(float(value), grad_h, float(grad_a), float(grad_b), float(grad_alpha), n_pos > 0, n_neg > 0)


@dataclass
class AucTwoTaskOutput:
    value: float
    en: AucOutput
    be: AucOutput
    lam: float

    @property
    def grad_h_en(self) -> np.ndarray:
        return self.en.grad_h

    @property
    def grad_h_be(self) -> np.ndarray:
        return self.lam * self.be.grad_h

    def state_grads(self, task: str, weighted: bool = False) -> tuple[float, float, float]:
        """(d/da, d/db, d/dalpha) for one task's auxiliary variables.

        By default these are the partials of that task's own loss. Scaling a
        task's loss by ``lam`` leaves its saddle point in (a, b, alpha)
        unchanged, while the scaled partials make a fixed step size
        unstable once ``lr * lam > 1``. ``weighted=True`` returns the exact
        partials of the combined loss.
        """
        out = self.en if task == "en" else self.be
        w = self.lam if (weighted and task == "be") else 1.0
        return w * out.grad_a, w * out.grad_b, w * out.grad_alpha


DEFAULT_LAMBDA = 100.0


def auc_two_task_loss(
    h_en,
    h_be,
    labels: TwoTaskLabels,
    state_en: AucState,
    state_be: AucState,
    lam: float = DEFAULT_LAMBDA,
) -> AucTwoTaskOutput:
    """``AUC_M(en) + lam * AUC_M(be)``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    en = auc_margin_loss(h_en, labels.y_en, state_en)
    be = auc_margin_loss(h_be, labels.y_be, state_be)
    return AucTwoTaskOutput(en.value + lam * be.value, en, be, lam)


def dice_loss(p, y, gamma: float = 1.0) -> LossOutput:
    """Self-adjusting Dice loss, averaged over tokens.

    Per token, with ``q = (1 - p) p`` and ``g = [y == +1]``::

        DSC = (2 q g + gamma) / (q + g + gamma),   loss = mean(1 - DSC)

    grad_wrt: positive-class probability ``p``.
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y)
    if p.shape != y.shape:
        raise ValueError("probabilities and labels differ in shape")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    g = (y == 1).astype(float)
    q = (1.0 - p) * p
    num = 2.0 * q * g + gamma
    den = q + g + gamma
    dsc = num / den
    n = len(p)
    d_dsc_dq = (2.0 * g * den - num) / den**2
    grad = -d_dsc_dq * (1.0 - 2.0 * p) / n
    return LossOutput(float(np.mean(1.0 - dsc)), grad)


def dice_two_task(h_en, h_be, labels: TwoTaskLabels, gamma: float = 1.0) -> TwoTaskOutput:
    """Dice loss applied to both binary heads, unweighted sum.

    grad_wrt: scores ``h`` of each head.
    """
    en = dice_loss(h_en, labels.y_en, gamma)
    be = dice_loss(h_be, labels.y_be, gamma)
    return TwoTaskOutput(en.value + be.value, en.grad, be.grad)
