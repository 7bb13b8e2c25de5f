from aucner.corpus import to_conll, parse_conll, validate_bio
from aucner.synthetic import SyntheticConfig, make_splits
from aucner.rng import derive_seed, make_rng


def test_split_sizes(splits):
    cfg = SyntheticConfig()
    assert [len(splits[k]) for k in ("train", "dev", "test")] == [cfg.n_train, cfg.n_dev, cfg.n_test]


def test_label_distribution_near_newswire(splits):
    dist = splits["train"].label_distribution()
    assert 9 <= dist["B"] <= 14
    assert 3 <= dist["I"] <= 7


def test_tags_strictly_valid(splits):
    assert all(validate_bio(s.tags).strict for c in splits.values() for s in c)


def test_deterministic_and_seeded():
    small = SyntheticConfig(n_train=30, n_dev=5, n_test=5)
    assert make_splits(small)["train"] == make_splits(small)["train"]
    other = SyntheticConfig(n_train=30, n_dev=5, n_test=5, seed=14)
    assert make_splits(other)["train"] != make_splits(small)["train"]


def test_conll_roundtrip(splits):
    c = splits["dev"]
    assert parse_conll(to_conll(c), split="dev") == c


def test_unseen_test_words_exist(splits):
    train_words = {w for s in splits["train"] for w in s.tokens}
    test_words = {w for s in splits["test"] for w in s.tokens}
    assert test_words - train_words


class TestRng:
    def test_derive_seed_stable(self):
        assert derive_seed(0, "a", 1) == derive_seed(0, "a", 1)
        assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
        assert derive_seed(0, "a", 1) != derive_seed(1, "a", 1)

    def test_label_types_distinguished(self):
        assert derive_seed(0, 1) != derive_seed(0, "1")
        assert derive_seed(0, None) != derive_seed(0, "None")

    def test_streams(self):
        assert make_rng(5, "x").random() == make_rng(5, "x").random()
        assert make_rng(5, "x").random() != make_rng(5, "y").random()
        assert 0 <= derive_seed(2**70, "z") < 2**64
