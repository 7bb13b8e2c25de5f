"""Oracle and property checks behind ``aucner verify``.

Each check returns a :class:`CheckResult`; none raises on a failed
comparison, so a caller can report every result in one pass.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracles
from .corpus import Corpus, tag_indices, to_two_task
from .crf import CrfParams, crf_nll, crf_viterbi, log_partition
from .evaluation import combine_predictions, entity_prf, wmw_auc
from .model import HeadGrads, ModelConfig, backward, forward, init_params
from .objectives import (
    AucState,
    auc_margin_loss,
    auc_two_task_loss,
    bce_two_task,
    ce_multiclass,
    dice_two_task,
)
from .rng import make_rng
from .sampling import InfeasibleError, sample_imbalanced
from .training import primal_dual_step

GRAD_LOSSES = ("CE", "CE-2T", "AUC-M", "AUC-2T", "DICE", "CRF")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# gradients of every loss composed with the model


def _grad_fixture(rng):
    cfg = ModelConfig(vocab_size=6, emb_dim=2, window=1, hidden_dim=3, seed=int(rng.integers(1 << 31)))
    params = init_params(cfg)
    for _, v in params.items():
        v[...] = rng.normal(0.0, 0.7, v.shape)
    while True:
        lengths = rng.integers(2, 6, size=2)
        tags = [oracles.random_strict_bio(rng, int(n)) for n in lengths]
        flat = [t for s in tags for t in s]
        if "B" in flat and "O" in flat:
            break
    sents = [rng.integers(0, 6, size=len(t)) for t in tags]
    return params, sents, tags


def _objective(kind, params, aux, sents, tags, lam):
    """Loss value, head gradients and auxiliary-variable gradients."""
    tr = forward(params, sents)
    gold = np.concatenate([tag_indices(t) for t in tags])
    parts = [to_two_task(t) for t in tags]
    labels = type(parts[0])(np.concatenate([p.y_en for p in parts]), np.concatenate([p.y_be for p in parts]))
    if kind == "CE":
        out = ce_multiclass(tr.p, gold)
        return out.value, HeadGrads(logits=out.grad), {}
    if kind == "CE-2T":
        out = bce_two_task(tr.h_en, tr.h_be, labels)
        return out.value, HeadGrads(s_en=out.grad_en, s_be=out.grad_be), {}
    if kind == "DICE":
        out = dice_two_task(tr.h_en, tr.h_be, labels)
        return out.value, HeadGrads(h_en=out.grad_en, h_be=out.grad_be), {}
    if kind == "AUC-M":
        st = AucState(aux["a"][0], aux["b"][0], aux["alpha"][0], 1.0)
        out = auc_margin_loss(tr.h_en, labels.y_en, st)
        return out.value, HeadGrads(h_en=out.grad_h), {"a": out.grad_a, "b": out.grad_b, "alpha": out.grad_alpha}
    if kind == "AUC-2T":
        st = {t: AucState(aux["a_" + t][0], aux["b_" + t][0], aux["alpha_" + t][0], 1.0) for t in ("en", "be")}
        out = auc_two_task_loss(tr.h_en, tr.h_be, labels, st["en"], st["be"], lam)
        g = {}
        for t in ("en", "be"):
            g["a_" + t], g["b_" + t], g["alpha_" + t] = out.state_grads(t, weighted=True)
        return out.value, HeadGrads(h_en=out.grad_h_en, h_be=out.grad_h_be), g
    if kind == "CRF":
        crf = CrfParams(aux["trans"], aux["start"], aux["stop"])
        value = 0.0
        g_em = []
        g = {"trans": np.zeros((3, 3)), "start": np.zeros(3), "stop": np.zeros(3)}
        for em, gl in zip(tr.split(tr.logits), tr.split(gold)):
            out = crf_nll(em, crf, gl)
            value += out.value
            g_em.append(out.grad_emissions)
            for name, v in out.grad.items():
                g[name] += v
        return value, HeadGrads(logits=np.concatenate(g_em)), g
    raise ValueError(f"unknown loss {kind!r}")


def _aux_fixture(kind, rng) -> dict[str, np.ndarray]:
    if kind == "AUC-M":
        return {"a": rng.uniform(0, 1, 1), "b": rng.uniform(0, 1, 1), "alpha": rng.uniform(0.1, 1, 1)}
    if kind == "AUC-2T":
        return {f"{v}_{t}": rng.uniform(0.1 if v == "alpha" else 0, 1, 1) for t in ("en", "be") for v in ("a", "b", "alpha")}
    if kind == "CRF":
        crf = CrfParams.random(int(rng.integers(1 << 31)), 0.5)
        return dict(crf.items())
    return {}


def gradient_errors(kind: str, seed: int, lam: float = 100.0, eps: float = 1e-5) -> dict[str, float]:
    """Relative error between analytic and central-difference gradients,
    per parameter tensor and auxiliary variable, on one random fixture."""
    rng = make_rng(seed, "gradcheck", kind)
    params, sents, tags = _grad_fixture(rng)
    aux = _aux_fixture(kind, rng)
    _, head, aux_grads = _objective(kind, params, aux, sents, tags, lam)
    analytic = backward(params, forward(params, sents), head)

    def f():
        return _objective(kind, params, aux, sents, tags, lam)[0]

    errs = {}
    for name, arr in params.items():
        errs[name] = oracles.relative_error(getattr(analytic, name), oracles.numeric_grad(f, arr, eps))
    for name, arr in aux.items():
        errs[name] = oracles.relative_error(aux_grads[name], oracles.numeric_grad(f, arr, eps))
    return errs


def check_gradients(n_fixtures: int = 20, tol: float = 1e-4) -> CheckResult:
    def run():
        worst = {}
        for kind in GRAD_LOSSES:
            worst[kind] = max(max(gradient_errors(kind, s).values()) for s in range(n_fixtures))
        ok = all(v < tol for v in worst.values())
        detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
        return ok, f"max rel. error over {n_fixtures} fixtures per loss: {detail}"

    return _timed("gradients vs finite differences", run)


# --------------------------------------------------------------------------
# two-task prediction combination


def check_combination(n: int = 1000) -> CheckResult:
    def run():
        table = {(1, 1): "B", (1, -1): "I", (-1, -1): "O", (-1, 1): "O"}
        for (en, be), want in table.items():
            tags, bad = combine_predictions([en], [be])
            if tags != [want] or bad != int((en, be) == (-1, 1)):
                return False, f"({en:+d},{be:+d}) -> {tags}, {bad} inconsistencies"
        rng = make_rng(0, "roundtrip")
        for _ in range(n):
            tags = oracles.random_strict_bio(rng, int(rng.integers(1, 30)))
            lab = to_two_task(tags)
            back, bad = combine_predictions(lab.y_en, lab.y_be)
            if back != tags or bad:
                return False, f"round trip broke on {tags}"
        return True, f"4 combinations exact, {n} strict BIO round trips identical"

    return _timed("two-task combination", run)


# --------------------------------------------------------------------------
# saddle point of the AUC-margin objective


def check_saddle(n: int = 1000, n_steps: int = 10_000) -> CheckResult:
    def run():
        rng = make_rng(0, "saddle")
        worst_max = worst_ab = 0.0
        for _ in range(n):
            size = int(rng.integers(2, 40))
            y = np.where(rng.random(size) < 0.3, 1, -1)
            y[0], y[1] = 1, -1
            h = rng.random(size)
            m = float(rng.uniform(0.1, 2.0))
            a, b = h[y == 1].mean(), h[y == -1].mean()
            star = max(0.0, m - a + b)
            var = np.mean((h[y == 1] - a) ** 2) + np.mean((h[y == -1] - b) ** 2)
            at_star = auc_margin_loss(h, y, AucState(a, b, star, m))
            worst_max = max(worst_max, abs(at_star.value - var - star**2))
            # nothing on a grid of feasible alphas beats the closed form
            for alpha in np.linspace(0.0, star + 1.0, 9):
                if auc_margin_loss(h, y, AucState(a, b, alpha, m)).value > at_star.value + 1e-12:
                    return False, f"alpha={alpha} exceeds the inner max"
            worst_ab = max(worst_ab, abs(at_star.grad_a), abs(at_star.grad_b))
        st = AucState()
        for _ in range(n_steps):
            size = int(rng.integers(1, 20))
            y = np.where(rng.random(size) < 0.5, 1, -1)
            out = auc_margin_loss(rng.random(size), y, st)
            dalpha = out.grad_alpha + float(rng.normal(0, 5))
            skip = ["t"] if out.degenerate else []
            primal_dual_step([], [], [], {"t": st}, {"t": (out.grad_a, out.grad_b, dalpha)}, 0.1, 0.5, 0.9, skip)
            if st.alpha < 0:
                return False, f"alpha went negative: {st.alpha}"
        ok = worst_max < 1e-9 and worst_ab < 1e-12
        return ok, f"inner max error {worst_max:.1e}, |da|,|db| at class means {worst_ab:.1e}, alpha >= 0 over {n_steps} steps"

    return _timed("AUC-margin saddle identities", run)


# --------------------------------------------------------------------------
# CRF against enumeration


def check_crf(n: int = 100) -> CheckResult:
    def run():
        rng = make_rng(0, "crf-oracle")
        worst_z = worst_v = 0.0
        for i in range(n):
            L = int(rng.integers(1, 6))
            em = rng.normal(0, 2, (L, 3))
            crf = CrfParams.random(i, 1.5)
            worst_z = max(worst_z, abs(log_partition(em, crf) - oracles.brute_log_partition(em, crf.trans, crf.start, crf.stop)))
            _, best = oracles.brute_best_path(em, crf.trans, crf.start, crf.stop)
            path = crf_viterbi(em, crf)
            got = oracles.brute_path_scores(em, crf.trans, crf.start, crf.stop)[tuple(path)]
            worst_v = max(worst_v, abs(got - best))
        worst_norm = 0.0
        for L in range(1, 5):
            em = rng.normal(0, 1, (L, 3))
            crf = CrfParams.random(100 + L, 1.0)
            total = sum(np.exp(-crf_nll(em, crf, g).value) for g in itertools.product(range(3), repeat=L))
            worst_norm = max(worst_norm, abs(total - 1.0))
        ok = worst_z < 1e-9 and worst_v < 1e-9 and worst_norm < 1e-6
        return ok, f"logZ error {worst_z:.1e}, Viterbi score gap {worst_v:.1e}, normalization error {worst_norm:.1e}"

    return _timed("CRF vs enumeration", run)


# --------------------------------------------------------------------------
# entity metrics and WMW


def check_metrics(n_corpora: int = 500, n_auc: int = 300) -> CheckResult:
    def run():
        rng = make_rng(0, "metric-oracle")
        for _ in range(n_corpora):
            gold, pred = [], []
            for _ in range(int(rng.integers(1, 6))):
                L = int(rng.integers(1, 12))
                g = oracles.random_lenient_bio(rng, L)
                # mutate a copy so that predictions overlap gold more than chance
                p = [t if rng.random() < 0.7 else ("B", "I", "O")[rng.integers(3)] for t in g]
                gold.append(g)
                pred.append(p)
            m = entity_prf(gold, pred)
            want = oracles.chunk_set_prf(gold, pred)
            if max(abs(m.precision - want[0]), abs(m.recall - want[1]), abs(m.f1 - want[2])) > 1e-12:
                return False, f"entity_prf mismatch on {gold} / {pred}"
        for _ in range(n_auc):
            size = int(rng.integers(2, 201))
            y = np.where(rng.random(size) < 0.3, 1, -1)
            y[0], y[1] = 1, -1
            # coarse rounding forces ties
            s = np.round(rng.random(size), int(rng.integers(1, 4)))
            if wmw_auc(s, y) != oracles.pairwise_auc(s, y):
                return False, f"wmw_auc mismatch at n={size}"
        return True, f"entity_prf equals the set oracle on {n_corpora} corpora; wmw_auc equals the pairwise count on {n_auc} inputs (n <= 200)"

    return _timed("metrics vs brute force", run)


# --------------------------------------------------------------------------
# imbalanced sampler


def check_generator(corpus: Corpus, targets=(1, 2, 5, 10, 20), budget: int = 3000, unit: str = "tokens", tol: float = 0.5) -> CheckResult:
    def run():
        realized = []
        for t in targets:
            try:
                part = sample_imbalanced(corpus, budget, t, tol, seed=0, unit=unit)
            except InfeasibleError as e:
                return False, f"{t}% infeasible: {e}"
            # recount from the tags themselves
            sents = [corpus[i] for i in part.indices]
            n_tok = sum(len(s.tags) for s in sents)
            n_ent = sum(tag != "O" for s in sents for tag in s.tags)
            pct = 100.0 * n_ent / n_tok
            if abs(pct - t) > tol or abs(pct - part.entity_pct) > 1e-9:
                return False, f"target {t}% realized {pct:.2f}%"
            realized.append(f"{t}->{pct:.2f}")
        return True, f"budget {budget} {unit}: " + ", ".join(realized)

    return _timed(f"imbalanced sampler ({unit})", run)


def run_all(corpus: Corpus | None = None) -> list[CheckResult]:
    from .synthetic import make_splits

    if corpus is None:
        corpus = make_splits()["train"]
    return [
        check_gradients(),
        check_combination(),
        check_saddle(),
        check_crf(),
        check_metrics(),
        check_generator(corpus),
        check_generator(corpus, budget=100, unit="sentences"),
    ]
