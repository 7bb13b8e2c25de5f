"""Optimizers and the training loop for every loss kind."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import TAGS, Corpus, Vocab, tag_indices, to_two_task, TwoTaskLabels
from .crf import CrfParams, crf_nll, crf_viterbi
from .evaluation import Metrics, combine_predictions, entity_prf, threshold_predictions
from .model import HeadGrads, ModelConfig, ModelParams, backward, forward_windows, init_params, window_indices
from .objectives import (
    DEFAULT_LAMBDA,
    AucState,
    auc_two_task_loss,
    bce_two_task,
    ce_multiclass,
    dice_two_task,
)
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

LOSS_KINDS = ("CE", "CRF", "CE-2T", "AUC-2T", "COMAUC-2T", "DICE")
TWO_TASK_KINDS = ("CE-2T", "AUC-2T", "COMAUC-2T", "DICE")
MAX_REJECTED_FRACTION = 0.01


class ConfigurationError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "AUC-2T"
    lam: float = DEFAULT_LAMBDA
    margin: float = 1.0
    lr_primal: float = 0.1
    lr_dual: float = 0.1
    momentum: float = 0.9
    epochs: int = 30
    batch_sentences: int = 8
    seed: int = 0
    eval_every: int = 1
    tau: float = 0.5
    dice_gamma: float = 1.0
    # "auto" picks the decoder that matches loss_kind
    heads: str = "auto"

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigurationError(f"unknown loss kind {self.loss_kind!r}; choose from {LOSS_KINDS}")
        if self.lr_primal <= 0 or self.lr_dual <= 0:
            raise ConfigurationError("learning rates must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.epochs < 1 or self.batch_sentences < 1 or self.eval_every < 1:
            raise ConfigurationError("epochs, batch_sentences and eval_every must be >= 1")
        if self.heads not in ("auto", "two_task", "multiclass"):
            raise ConfigurationError(f"unknown heads setting {self.heads!r}")
        if self.heads == "two_task" and self.loss_kind in ("CE", "CRF"):
            raise ConfigurationError(f"{self.loss_kind} trains the 3-class head only; two-task heads unavailable")
        if self.heads == "multiclass" and self.loss_kind in TWO_TASK_KINDS:
            raise ConfigurationError(f"{self.loss_kind} decodes through the two-task heads")

    @property
    def decoder(self) -> str:
        if self.loss_kind == "CRF":
            return "viterbi"
        if self.loss_kind == "CE":
            return "argmax"
        return "two_task"


# --------------------------------------------------------------------------
# optimizer steps


def _finite(*arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


def sgd_step(params, grads, velocity, lr: float, momentum: float) -> bool:
    """``v <- momentum v + g; p <- p - lr v`` on every tensor, in place.

    ``params``, ``grads`` and ``velocity`` are parallel containers exposing
    ``items()`` (``ModelParams``, ``CrfParams``). A non-finite gradient
    rejects the whole step and leaves everything untouched; the return
    value says whether the step was applied.
    """
    g = dict(grads.items())
    if not _finite(*g.values()):
        return False
    vel = dict(velocity.items())
    for name, p in params.items():
        v = vel[name]
        v *= momentum
        v += g[name]
        p -= lr * v
    return True


def primal_dual_step(
    params: Sequence,
    grads: Sequence,
    velocity: Sequence,
    states: dict[str, AucState],
    state_grads: dict[str, tuple[float, float, float]],
    lr_primal: float,
    lr_dual: float,
    momentum: float,
    skip_alpha: Iterable[str] = (),
) -> bool:
    """One stochastic primal-dual update of the AUC-margin min-max problem.

    Network weights take a momentum descent step and each task's ``a, b``
    a plain descent step at ``lr_primal``; each ``alpha`` takes an ascent
    step at ``lr_dual`` projected onto ``alpha >= 0``. Tasks listed in
    ``skip_alpha`` (degenerate batches) keep their ``alpha``.
    """
    skip_alpha = set(skip_alpha)
    flat = [v for g in grads for _, v in g.items()]
    flat += [np.asarray(sg) for sg in state_grads.values()]
    if not _finite(*flat):
        return False
    for p, g, v in zip(params, grads, velocity):
        sgd_step(p, g, v, lr_primal, momentum)
    for task, st in states.items():
        da, db, dalpha = state_grads[task]
        st.a -= lr_primal * da
        st.b -= lr_primal * db
        if task not in skip_alpha:
            st.alpha = max(0.0, st.alpha + lr_dual * dalpha)
    return True


def comauc_schedule(global_step: int) -> str:
    """Compositional training alternates per batch: CE on even steps, AUC on odd."""
    return "CE" if global_step % 2 == 0 else "AUC"


# --------------------------------------------------------------------------
# data plumbing


@dataclass
class EncodedCorpus:
    windows: list[np.ndarray]
    gold: list[np.ndarray]
    labels: list[TwoTaskLabels]
    tags: list[tuple[str, ...]]

    def __len__(self) -> int:
        return len(self.windows)

    def batch(self, idx: Sequence[int]):
        w = np.concatenate([self.windows[i] for i in idx])
        lengths = [len(self.windows[i]) for i in idx]
        gold = np.concatenate([self.gold[i] for i in idx])
        labels = TwoTaskLabels(
            np.concatenate([self.labels[i].y_en for i in idx]),
            np.concatenate([self.labels[i].y_be for i in idx]),
        )
        return w, lengths, gold, labels


def encode_corpus(corpus: Corpus, vocab: Vocab, window: int) -> EncodedCorpus:
    return EncodedCorpus(
        windows=[window_indices(vocab.encode(s.tokens), window) for s in corpus],
        gold=[tag_indices(s.tags) for s in corpus],
        labels=[to_two_task(s.tags) for s in corpus],
        tags=[s.tags for s in corpus],
    )


def predict_tags(params: ModelParams, crf: CrfParams | None, data: EncodedCorpus, config: TrainConfig) -> tuple[list[list[str]], int]:
    """Decode every sentence; second value counts begin-without-entity tokens."""
    if not len(data):
        return [], 0
    tr = forward_windows(params, np.concatenate(data.windows), [len(w) for w in data.windows])
    out: list[list[str]] = []
    inconsistent = 0
    if config.decoder == "argmax":
        ids = tr.split(np.argmax(tr.p, axis=1))
        out = [[TAGS[i] for i in s] for s in ids]
    elif config.decoder == "viterbi":
        out = [[TAGS[i] for i in crf_viterbi(em, crf)] for em in tr.split(tr.logits)]
    else:
        en = tr.split(threshold_predictions(tr.h_en, config.tau))
        be = tr.split(threshold_predictions(tr.h_be, config.tau))
        for e, b in zip(en, be):
            tags, n_bad = combine_predictions(e, b)
            out.append(tags)
            inconsistent += n_bad
    return out, inconsistent


def evaluate(params, crf, data: EncodedCorpus, config: TrainConfig) -> tuple[Metrics, int]:
    pred, inconsistent = predict_tags(params, crf, data, config)
    return entity_prf(data.tags, pred), inconsistent


# --------------------------------------------------------------------------
# training loop


@dataclass
class RunRecord:
    config: dict
    model_config: dict
    partition: dict | None
    train_loss: list[float] = field(default_factory=list)
    dev: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    dev_best: dict | None = None
    test: dict | None = None
    test_inconsistent: int = 0
    steps: int = 0
    step_kinds: dict = field(default_factory=dict)
    rejected_steps: int = 0
    clamped: int = 0
    degenerate_alpha_skips: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    wall_clock: float = 0.0
    checkpoint: str | None = None
    params: ModelParams | None = field(default=None, repr=False, compare=False)
    crf: CrfParams | None = field(default=None, repr=False, compare=False)
    auc_states: dict | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("params", "crf", "auc_states"):
            d.pop(k)
        return d

    def metrics_view(self) -> dict:
        """Everything except timing, for determinism comparisons."""
        d = self.to_dict()
        d.pop("wall_clock")
        return d


class Trainer:
    def __init__(self, config: TrainConfig, model_config: ModelConfig):
        self.config = config
        self.model_config = model_config
        self.params = init_params(model_config)
        self.velocity = self.params.zeros_like()
        self.crf = CrfParams.zeros() if config.loss_kind == "CRF" else None
        self.crf_velocity = self.crf.zeros_like() if self.crf is not None else None
        self.states = {
            "en": AucState(m=config.margin),
            "be": AucState(m=config.margin),
        }
        self.states_ready = {"en": False, "be": False}
        self.global_step = 0
        self.rejected = 0
        self.clamped = 0
        self.alpha_skips = {"en": 0, "be": 0}
        self.step_kinds: dict[str, int] = {}

    # each *_loss method returns (value, HeadGrads, crf grads or None, auc output or None)

    def _ce(self, tr, gold, labels):
        out = ce_multiclass(tr.p, gold)
        self.clamped += out.clamped
        return out.value, HeadGrads(logits=out.grad), None, None

    def _bce(self, tr, gold, labels):
        out = bce_two_task(tr.h_en, tr.h_be, labels)
        self.clamped += out.clamped
        return out.value, HeadGrads(s_en=out.grad_en, s_be=out.grad_be), None, None

    def _dice(self, tr, gold, labels):
        out = dice_two_task(tr.h_en, tr.h_be, labels, self.config.dice_gamma)
        return out.value, HeadGrads(h_en=out.grad_en, h_be=out.grad_be), None, None

    def _warm_start(self, tr, labels):
        # a, b start at their closed-form minimizers (class means of the
        # first batch holding both classes); from zero, the squared terms
        # drag every score into the flat region of the sigmoid before a, b
        # catch up when lam is large.
        for task, h, y in (("en", tr.h_en, labels.y_en), ("be", tr.h_be, labels.y_be)):
            if self.states_ready[task]:
                continue
            pos = y == 1
            if pos.any() and (~pos).any():
                self.states[task].a = float(h[pos].mean())
                self.states[task].b = float(h[~pos].mean())
                self.states_ready[task] = True

    def _auc(self, tr, gold, labels):
        self._warm_start(tr, labels)
        out = auc_two_task_loss(tr.h_en, tr.h_be, labels, self.states["en"], self.states["be"], self.config.lam)
        return out.value, HeadGrads(h_en=out.grad_h_en, h_be=out.grad_h_be), None, out

    def _crf(self, tr, gold, labels):
        n_tok = len(gold)
        value = 0.0
        g_em = np.empty_like(tr.logits)
        g_crf = self.crf.zeros_like()
        start = 0
        for em, g in zip(tr.split(tr.logits), tr.split(gold)):
            out = crf_nll(em, self.crf, g)
            value += out.value
            g_em[start:start + len(g)] = out.grad_emissions
            for (_, acc), (_, part) in zip(g_crf.items(), out.grad.items()):
                acc += part
            start += len(g)
        for _, acc in g_crf.items():
            acc /= n_tok
        return value / n_tok, HeadGrads(logits=g_em / n_tok), g_crf, None

    def step_kind(self) -> str:
        kind = self.config.loss_kind
        if kind == "COMAUC-2T":
            return "CE" if comauc_schedule(self.global_step) == "CE" else "AUC-2T"
        return kind

    def loss_fn(self, kind: str):
        return {
            "CE": self._ce,
            "CE-2T": self._bce,
            "DICE": self._dice,
            "AUC-2T": self._auc,
            "CRF": self._crf,
        }[kind]

    def train_step(self, windows, lengths, gold, labels) -> float:
        cfg = self.config
        kind = self.step_kind()
        tr = forward_windows(self.params, windows, lengths)
        value, head_grads, g_crf, auc = self.loss_fn(kind)(tr, gold, labels)
        grads = backward(self.params, tr, head_grads)
        if auc is not None:
            skip = [t for t, o in (("en", auc.en), ("be", auc.be)) if o.degenerate]
            for t in skip:
                self.alpha_skips[t] += 1
            ok = primal_dual_step(
                [self.params], [grads], [self.velocity], self.states,
                {t: auc.state_grads(t) for t in ("en", "be")},
                cfg.lr_primal, cfg.lr_dual, cfg.momentum, skip_alpha=skip,
            )
            assert all(st.alpha >= 0.0 for st in self.states.values())
        elif g_crf is not None:
            ok = _finite(*(v for _, v in g_crf.items())) and _finite(*(v for _, v in grads.items()))
            if ok:
                sgd_step(self.params, grads, self.velocity, cfg.lr_primal, cfg.momentum)
                sgd_step(self.crf, g_crf, self.crf_velocity, cfg.lr_primal, cfg.momentum)
        else:
            ok = sgd_step(self.params, grads, self.velocity, cfg.lr_primal, cfg.momentum)
        if not ok:
            self.rejected += 1
            log.warning("rejected non-finite gradient at step %d", self.global_step)
        self.step_kinds[kind] = self.step_kinds.get(kind, 0) + 1
        self.global_step += 1
        return value

    def full_loss(self, data: EncodedCorpus) -> float:
        """Training objective on the whole partition (no parameter change)."""
        w, lengths, gold, labels = data.batch(range(len(data)))
        tr = forward_windows(self.params, w, lengths)
        kind = self.config.loss_kind
        if kind == "COMAUC-2T":
            kind = "AUC-2T"
        clamped = self.clamped
        value = self.loss_fn(kind)(tr, gold, labels)[0]
        self.clamped = clamped
        return float(value)


def train(
    config: TrainConfig,
    train_corpus: Corpus,
    dev: Corpus,
    test: Corpus | None,
    vocab: Vocab,
    model_config: ModelConfig | None = None,
    partition: dict | None = None,
) -> RunRecord:
    """Train one model and report test metrics of the best-dev checkpoint.

    Sentence order is reshuffled each epoch from ``config.seed``; batches of
    ``batch_sentences`` sentences pool their tokens for the loss. Dev F1 is
    measured every ``eval_every`` epochs and the parameters with the highest
    dev F1 (earliest on ties) are kept.
    """
    if len(train_corpus) == 0:
        raise ConfigurationError("empty training partition")
    t0 = time.perf_counter()
    if model_config is None:
        model_config = ModelConfig(vocab_size=vocab.size, seed=derive_seed(config.seed, "model"))
    if model_config.vocab_size != vocab.size:
        raise ConfigurationError(f"model vocab_size {model_config.vocab_size} != vocab size {vocab.size}")
    k = model_config.window
    data = encode_corpus(train_corpus, vocab, k)
    dev_data = encode_corpus(dev, vocab, k)
    test_data = encode_corpus(test, vocab, k) if test is not None else None

    record = RunRecord(config=asdict(config), model_config=asdict(model_config), partition=partition)
    if train_corpus.n_entity_tokens == 0:
        msg = "training partition has no entity tokens"
        log.warning(msg)
        record.warnings.append(msg)

    trainer = Trainer(config, model_config)
    rng = make_rng(config.seed, "shuffle")
    best_f1 = -1.0
    best = None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(data))
        for s in range(0, len(order), config.batch_sentences):
            trainer.train_step(*data.batch(order[s:s + config.batch_sentences]))
        record.train_loss.append(trainer.full_loss(data))
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            m, _ = evaluate(trainer.params, trainer.crf, dev_data, config)
            record.dev.append({"epoch": epoch, **m.to_dict()})
            if m.f1 > best_f1:
                best_f1 = m.f1
                best = (epoch, trainer.params.copy(), trainer.crf.copy() if trainer.crf else None)
                record.best_epoch = epoch
                record.dev_best = m.to_dict()

    record.steps = trainer.global_step
    record.step_kinds = dict(sorted(trainer.step_kinds.items()))
    record.rejected_steps = trainer.rejected
    record.clamped = trainer.clamped
    record.degenerate_alpha_skips = dict(trainer.alpha_skips)
    if trainer.rejected > MAX_REJECTED_FRACTION * trainer.global_step:
        raise TrainingError(
            f"{trainer.rejected} of {trainer.global_step} steps rejected for non-finite gradients"
        )

    _, record.params, record.crf = best
    record.auc_states = {t: AucState(**asdict(s)) for t, s in trainer.states.items()}
    if test_data is not None:
        m, bad = evaluate(record.params, record.crf, test_data, config)
        record.test = m.to_dict()
        record.test_inconsistent = bad
    record.wall_clock = time.perf_counter() - t0
    return record
