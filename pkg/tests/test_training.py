import numpy as np
import pytest

import aucner.training as training
from aucner.corpus import Corpus, Sentence, build_vocab
from aucner.evaluation import wmw_auc
from aucner.model import ModelConfig, forward_windows, init_params
from aucner.rng import make_rng
from aucner.objectives import AucState
from aucner.training import (
    ConfigurationError,
    TrainConfig,
    Trainer,
    TrainingError,
    comauc_schedule,
    encode_corpus,
    primal_dual_step,
    sgd_step,
    train,
)


def _params():
    return init_params(ModelConfig(vocab_size=5, emb_dim=2, window=1, hidden_dim=3, seed=1))


def _toy():
    """Entity words never occur outside entities; fillers never inside."""
    sents = [
        Sentence(("the", "Zork", "said", "."), ("O", "B", "O", "O")),
        Sentence(("Blip", "Zork", "won", "."), ("B", "I", "O", "O")),
        Sentence(("a", "man", "met", "Quax", "."), ("O", "O", "O", "B", "O")),
        Sentence(("Quax", "and", "Blip", "left"), ("B", "O", "B", "O")),
        Sentence(("the", "man", "said", "."), ("O", "O", "O", "O")),
    ]
    return Corpus(tuple(sents) * 4, "train")


class TestSgd:
    def test_zero_grad_is_noop(self):
        p = _params()
        before = p.copy()
        assert sgd_step(p, p.zeros_like(), p.zeros_like(), 0.1, 0.9)
        for (_, x), (_, y) in zip(p.items(), before.items()):
            np.testing.assert_array_equal(x, y)

    def test_plain_descent(self):
        p = _params()
        before = p.copy()
        g = p.zeros_like()
        g.W3 += 2.0
        sgd_step(p, g, p.zeros_like(), 0.1, 0.0)
        np.testing.assert_allclose(before.W3 - p.W3, 0.2)

    def test_momentum_accumulates(self):
        p = _params()
        before = p.copy()
        g = p.zeros_like()
        g.b1 += 1.0
        v = p.zeros_like()
        sgd_step(p, g, v, 0.1, 0.9)
        sgd_step(p, g, v, 0.1, 0.9)
        # lr*g + lr*(0.9 g + g)
        np.testing.assert_allclose(before.b1 - p.b1, 0.1 * 2.9)

    def test_non_finite_rejected(self):
        p = _params()
        before = p.copy()
        g = p.zeros_like()
        g.W1[0, 0] = np.nan
        g.W3 += 1.0
        assert not sgd_step(p, g, p.zeros_like(), 0.1, 0.9)
        np.testing.assert_array_equal(p.W3, before.W3)


class TestPrimalDual:
    def test_saddle_is_fixed_point(self):
        p = _params()
        st = {"en": AucState(0.7, 0.2, 0.5)}
        before = p.copy()
        assert primal_dual_step([p], [p.zeros_like()], [p.zeros_like()], st, {"en": (0.0, 0.0, 0.0)}, 0.1, 0.1, 0.9)
        assert (st["en"].a, st["en"].b, st["en"].alpha) == (0.7, 0.2, 0.5)
        np.testing.assert_array_equal(p.W1, before.W1)

    def test_alpha_projection(self):
        p = _params()
        st = {"en": AucState(0.0, 0.0, 0.05)}
        primal_dual_step([p], [p.zeros_like()], [p.zeros_like()], st, {"en": (0.0, 0.0, -10.0)}, 0.1, 0.1, 0.0)
        assert st["en"].alpha == 0.0

    def test_directions(self):
        p = _params()
        st = {"en": AucState(0.5, 0.5, 0.5)}
        primal_dual_step([p], [p.zeros_like()], [p.zeros_like()], st, {"en": (1.0, -1.0, 1.0)}, 0.1, 0.2, 0.0)
        np.testing.assert_allclose((st["en"].a, st["en"].b, st["en"].alpha), (0.4, 0.6, 0.7))

    def test_skip_alpha(self):
        p = _params()
        st = {"en": AucState(0.5, 0.5, 0.5)}
        primal_dual_step([p], [p.zeros_like()], [p.zeros_like()], st, {"en": (0.0, 0.0, 1.0)}, 0.1, 0.1, 0.0, skip_alpha=["en"])
        assert st["en"].alpha == 0.5

    def test_a_converges_to_positive_mean(self):
        h = np.array([0.9, 0.7, 0.2, 0.1])
        y = np.array([1, 1, -1, -1])
        st = {"en": AucState(0.0, 0.0, 0.0)}
        p = _params()
        for _ in range(500):
            da = 2 * (st["en"].a - h[y == 1].mean())
            primal_dual_step([p], [p.zeros_like()], [p.zeros_like()], st, {"en": (da, 0.0, 0.0)}, 0.1, 0.1, 0.0)
        assert abs(st["en"].a - 0.8) < 1e-6

    def test_non_finite_aux_rejected(self):
        p = _params()
        st = {"en": AucState(0.5, 0.5, 0.5)}
        assert not primal_dual_step([p], [p.zeros_like()], [p.zeros_like()], st, {"en": (np.inf, 0.0, 0.0)}, 0.1, 0.1, 0.0)
        assert st["en"].a == 0.5


class TestComaucSchedule:
    def test_alternates(self):
        assert [comauc_schedule(i) for i in range(4)] == ["CE", "AUC", "CE", "AUC"]

    def test_step_counts(self, splits):
        data = splits["train"].subset(range(36))
        cfg = TrainConfig("COMAUC-2T", epochs=2, batch_sentences=8, lam=7.0)
        rec = train(cfg, data, splits["dev"].subset(range(20)), None, build_vocab(data))
        kinds = rec.step_kinds
        assert abs(kinds["CE"] - kinds["AUC-2T"]) <= 1
        assert kinds["CE"] + kinds["AUC-2T"] == rec.steps == 10
        assert rec.config["lam"] == 7.0


class TestConfig:
    def test_crf_cannot_use_two_task(self):
        with pytest.raises(ConfigurationError):
            TrainConfig("CRF", heads="two_task")

    def test_auc_cannot_decode_multiclass(self):
        with pytest.raises(ConfigurationError):
            TrainConfig("AUC-2T", heads="multiclass")

    @pytest.mark.parametrize("kw", [dict(loss_kind="HINGE"), dict(lr_primal=0), dict(momentum=1.0), dict(epochs=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            TrainConfig(**kw)

    def test_decoders(self):
        assert TrainConfig("CE").decoder == "argmax"
        assert TrainConfig("CRF").decoder == "viterbi"
        assert TrainConfig("DICE").decoder == "two_task"


class TestTrain:
    def test_ce_loss_decreases(self):
        data = _toy()
        rec = train(TrainConfig("CE", epochs=15, lr_primal=0.1), data, data, None, build_vocab(data))
        assert rec.train_loss[-1] < rec.train_loss[0]
        assert rec.dev_best["f1"] == 1.0

    @pytest.mark.parametrize("kind", ["CE", "CRF", "CE-2T", "AUC-2T", "COMAUC-2T", "DICE"])
    def test_every_kind_runs_and_repeats(self, kind, splits):
        data = splits["train"].subset(range(24))
        dev = splits["dev"].subset(range(15))
        vocab = build_vocab(data)
        cfg = TrainConfig(kind, epochs=2, seed=5)
        a = train(cfg, data, dev, dev, vocab)
        b = train(cfg, data, dev, dev, vocab)
        assert a.metrics_view() == b.metrics_view()
        assert a.test is not None and a.rejected_steps == 0

    @pytest.mark.parametrize("seed", range(3))
    def test_auc_separates_entities(self, seed):
        # lam scales the begin-task step, so lam=100 needs a far smaller lr here
        data = _toy()
        vocab = build_vocab(data)
        trainer = Trainer(TrainConfig("AUC-2T", lam=1.0), ModelConfig(vocab_size=vocab.size, seed=seed))
        enc = encode_corpus(data, vocab, 2)
        rng = make_rng(seed, "toy")
        for _ in range(100):
            order = rng.permutation(len(enc))
            for s in range(0, len(order), 8):
                trainer.train_step(*enc.batch(order[s:s + 8]))
        w, lengths, _, labels = enc.batch(range(len(enc)))
        tr = forward_windows(trainer.params, w, lengths)
        assert wmw_auc(tr.h_en, labels.y_en) == 1.0
        assert wmw_auc(tr.h_be, labels.y_be) == 1.0
        assert all(st.alpha >= 0 for st in trainer.states.values())

    def test_no_entity_partition_warns(self, splits):
        empty = Corpus(tuple(s for s in splits["train"] if s.n_entity_tokens == 0)[:10])
        rec = train(TrainConfig("AUC-2T", epochs=1), empty, splits["dev"].subset(range(5)), None, build_vocab(empty))
        assert rec.warnings and rec.degenerate_alpha_skips["en"] > 0

    def test_empty_partition(self, splits):
        with pytest.raises(ConfigurationError):
            train(TrainConfig(), Corpus(()), splits["dev"], None, build_vocab(splits["dev"]))

    def test_vocab_size_mismatch(self):
        data = _toy()
        with pytest.raises(ConfigurationError):
            train(TrainConfig(), data, data, None, build_vocab(data), ModelConfig(vocab_size=3))

    def test_too_many_rejected_steps(self, monkeypatch):
        data = _toy()
        real = training.backward

        def poisoned(params, tr, head):
            g = real(params, tr, head)
            g.W1[0, 0] = np.nan
            return g

        monkeypatch.setattr(training, "backward", poisoned)
        with pytest.raises(TrainingError):
            train(TrainConfig("CE", epochs=1), data, data, None, build_vocab(data))
