import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aucner.corpus import (
    ConllParseError,
    Corpus,
    EmptyCorpusError,
    Sentence,
    TagError,
    build_vocab,
    parse_conll,
    read_conll,
    to_conll,
    to_two_task,
    validate_bio,
)
from aucner.evaluation import combine_predictions
from aucner.oracles import random_strict_bio
from aucner.rng import make_rng


class TestParse:
    def test_two_sentences(self):
        c = parse_conll("EU B-ORG\nrejects O\n\nPeter B-PER")
        assert len(c) == 2
        assert c[0].tags == ("B-ORG", "O")
        assert c[1].tags == ("B-PER",)
        assert c[0].tokens == ("EU", "rejects")

    def test_docstart_and_extra_blank_lines(self):
        text = "-DOCSTART- -X- O O\n\n\nEU NNP B-ORG\n\n\nPeter NNP B-PER\n"
        c = parse_conll(text)
        assert [s.tokens for s in c] == [("EU",), ("Peter",)]

    def test_tag_column_selection(self):
        c = parse_conll("EU NNP B-NP B-ORG\nrejects VBZ B-VP O\n", column=2)
        assert c[0].tags == ("B-NP", "B-VP")

    def test_missing_tag_reports_line(self):
        with pytest.raises(ConllParseError) as err:
            parse_conll("EU B-ORG\nEU\n")
        assert err.value.line == 2

    def test_inconsistent_columns(self):
        with pytest.raises(ConllParseError):
            parse_conll("EU NNP B-ORG\nrejects O\n")

    def test_invalid_tag_reports_line(self):
        with pytest.raises(TagError) as err:
            parse_conll("EU B-ORG\nrejects X-FOO\n")
        assert err.value.line == 2

    @pytest.mark.parametrize("text", ["", "\n\n", "-DOCSTART- O\n\n"])
    def test_empty_input(self, text):
        with pytest.raises(EmptyCorpusError):
            parse_conll(text)

    def test_keep_type_filters_other_types(self):
        c = parse_conll("EU B-ORG\nsays O\nPeter B-PER\nBlack I-PER\n", keep_type="PER")
        assert c[0].tags == ("O", "O", "B-PER", "I-PER")

    def test_read_file(self, tmp_path):
        p = tmp_path / "train.txt"
        p.write_text("EU B-ORG\nrejects O\n", encoding="utf-8")
        assert read_conll(p)[0].tags == ("B-ORG", "O")

    def test_roundtrip_serialization(self):
        text = "EU B-ORG\nrejects O\n\nPeter B-PER\nBlack I-PER\n"
        assert to_conll(parse_conll(text)) == text

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.lists(st.tuples(st.from_regex(r"[A-Za-z]{1,6}", fullmatch=True),
                                       st.sampled_from(["O", "B-PER", "I-PER", "B-LOC", "I", "B"])),
                             min_size=1, max_size=8), min_size=1, max_size=5))
    def test_parse_serialize_roundtrip(self, sents):
        corpus = Corpus(tuple(Sentence(tuple(w for w, _ in s), tuple(t for _, t in s)) for s in sents))
        again = parse_conll(to_conll(corpus))
        assert [s.tokens for s in again] == [s.tokens for s in corpus]
        assert [s.tags for s in again] == [s.tags for s in corpus]


class TestSentenceAndStats:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            Sentence(("a", "b"), ("O",))

    def test_empty_sentence(self):
        with pytest.raises(ValueError):
            Sentence((), ())

    def test_label_distribution_sums_to_100(self, splits):
        dist = splits["train"].label_distribution()
        assert abs(sum(dist.values()) - 100.0) < 0.1
        assert set(dist) == {"B", "I", "O"}

    def test_counts(self):
        c = parse_conll("EU B-ORG\nrejects O\n\nPeter B-PER\nBlack I-PER\n")
        assert c.n_tokens == 4
        assert c.n_entity_tokens == 3
        assert c.tag_counts() == {"B-ORG": 1, "O": 1, "B-PER": 1, "I-PER": 1}
        np.testing.assert_allclose(c.entity_pct, 75.0)


class TestValidate:
    def test_clean(self):
        r = validate_bio(["B", "I", "O"])
        assert r.valid and not r.warnings

    def test_i_after_o_warns(self):
        r = validate_bio(["O", "I", "I"])
        assert r.valid
        assert [w[0] for w in r.warnings] == [1]

    def test_type_mismatch_warns(self):
        r = validate_bio(["B-PER", "I-LOC"])
        assert r.valid
        assert [w[0] for w in r.warnings] == [1]

    def test_lexical_error(self):
        r = validate_bio(["B", "Q", "O"])
        assert not r.valid
        assert r.errors == [1]


class TestTwoTask:
    @pytest.mark.parametrize("tags,en,be", [
        (["B", "I", "O"], [1, 1, -1], [1, -1, -1]),
        (["O", "O", "O"], [-1, -1, -1], [-1, -1, -1]),
        (["B", "B", "I"], [1, 1, 1], [1, 1, -1]),
        (["B-PER", "I-PER", "O", "B-LOC"], [1, 1, -1, 1], [1, -1, -1, 1]),
        (["O", "I"], [-1, 1], [-1, -1]),
    ])
    def test_examples(self, tags, en, be):
        lab = to_two_task(tags)
        np.testing.assert_array_equal(lab.y_en, en)
        np.testing.assert_array_equal(lab.y_be, be)

    def test_invalid_tag(self):
        with pytest.raises(TagError):
            to_two_task(["B", "X"])

    def test_begin_implies_entity_and_roundtrip(self):
        rng = make_rng(5, "two-task")
        for _ in range(1000):
            tags = random_strict_bio(rng, int(rng.integers(1, 25)))
            lab = to_two_task(tags)
            assert np.all(lab.y_en[lab.y_be == 1] == 1)
            back, bad = combine_predictions(lab.y_en, lab.y_be)
            assert back == tags and bad == 0

    def test_lenient_i_decodes_as_continuation(self):
        lab = to_two_task(["O", "I"])
        assert combine_predictions(lab.y_en, lab.y_be)[0] == ["O", "I"]
        lab = to_two_task(["I", "I"])
        # the encoding cannot tell a lenient start from a continuation
        assert combine_predictions(lab.y_en, lab.y_be)[0] == ["I", "I"]


class TestVocab:
    def _corpus(self, *lines):
        return Corpus(tuple(Sentence(tuple(l.split()), ("O",) * len(l.split())) for l in lines))

    def test_min_count(self):
        v = build_vocab(self._corpus("a a b"), min_count=2)
        assert v.word2idx == {"a": 1}
        assert v.index("b") == 0
        assert v.size == 2

    def test_lexicographic_ties(self):
        v = build_vocab(self._corpus("b a"), min_count=1)
        assert v.word2idx == {"a": 1, "b": 2}

    def test_frequency_order(self):
        v = build_vocab(self._corpus("z z z a a m"), min_count=1)
        assert v.words() == ["z", "a", "m"]

    def test_empty_after_threshold(self):
        v = build_vocab(self._corpus("a b c"), min_count=5)
        assert v.size == 1
        np.testing.assert_array_equal(v.encode(["a", "q"]), [0, 0])

    def test_indices_dense_and_injective(self, splits):
        v = build_vocab(splits["train"], min_count=2)
        idx = sorted(v.word2idx.values())
        assert idx == list(range(1, v.size))

    def test_digest_stable(self, splits):
        assert build_vocab(splits["train"]).digest() == build_vocab(splits["train"]).digest()
