"""Seeded generator of a small CoNLL-style NER corpus.

Used as the desk-scale stand-in for real newswire data when none is
available. Sentences mix Zipf-distributed filler words with typed entities
(PER, LOC, ORG, MISC) drawn from Zipf-distributed name pools, so frequent
names recur across splits and rare ones are mostly unseen at test time.
Entities are usually, but not always, flanked by type-specific cue words,
and the cue words also occur in entity-free text. The default parameters
give a label distribution close to CoNLL 2003 English (about 11.5% B,
5% I, 83.5% O).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Sentence
from .rng import make_rng

ONSETS = ["b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z",
          "br", "ch", "dr", "gr", "kl", "pr", "st", "tr", "sh"]
VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "ou", "y"]
CODAS = ["", "", "n", "r", "s", "l", "t", "m", "k", "nd", "st", "x"]

FUNCTION_WORDS = ["the", ",", ".", "of", "to", "a", "and", "on", "for", "was", "is", "with",
                  "by", "that", "it", "as", "he", "his", "has", "had", "be", "were", "after"]

CUES = {
    "PER": (["Mr.", "coach", "minister", "striker", "president", "told"], ["said", "told", "scored", "added"]),
    "LOC": (["in", "at", "from", "near", "to"], ["on", "after", "where"]),
    "ORG": (["shares", "club", "firm", "beat", "against"], ["said", "shares", "beat", "won"]),
    "MISC": (["the", "a", "his"], ["team", "league", "cup", "election"]),
}
TYPE_WEIGHTS = {"PER": 0.30, "LOC": 0.30, "ORG": 0.25, "MISC": 0.15}
# probabilities of entity lengths 1, 2, 3
LENGTHS = {
    "PER": [0.40, 0.54, 0.06],
    "LOC": [0.80, 0.17, 0.03],
    "ORG": [0.60, 0.30, 0.10],
    "MISC": [0.75, 0.20, 0.05],
}


@dataclass(frozen=True)
class SyntheticConfig:
    n_train: int = 3000
    n_dev: int = 400
    n_test: int = 600
    n_filler: int = 600
    names_per_type: int = 300
    p_entity_free: float = 0.25
    mean_extra_entities: float = 1.05
    p_left_cue: float = 0.6
    p_right_cue: float = 0.4
    zipf_s: float = 1.05
    seed: int = 13


class _Pool:
    def __init__(self, words, rng, s):
        self.words = list(words)
        w = 1.0 / np.arange(1, len(self.words) + 1) ** s
        self.p = w / w.sum()
        self.rng = rng

    def draw(self) -> str:
        return self.words[self.rng.choice(len(self.words), p=self.p)]


def _pseudo_words(rng, n, capitalize, taken):
    out = []
    while len(out) < n:
        n_syl = rng.integers(1, 4)
        w = "".join(
            ONSETS[rng.integers(len(ONSETS))] + VOWELS[rng.integers(len(VOWELS))] + CODAS[rng.integers(len(CODAS))]
            for _ in range(n_syl)
        )
        if capitalize:
            w = w.capitalize()
        if w in taken or len(w) < 2:
            continue
        taken.add(w)
        out.append(w)
    return out


class SyntheticNER:
    def __init__(self, config: SyntheticConfig = SyntheticConfig()):
        self.config = config
        rng = make_rng(config.seed, "synthetic")
        self.rng = rng
        taken = set(FUNCTION_WORDS)
        for left, right in CUES.values():
            taken.update(left)
            taken.update(right)
        filler = FUNCTION_WORDS + _pseudo_words(rng, config.n_filler, False, taken)
        self.filler = _Pool(filler, rng, config.zipf_s)
        self.cue_pool = _Pool(sorted({c for l, r in CUES.values() for c in l + r}), rng, 0.0)
        self.names = {
            t: _Pool(_pseudo_words(rng, config.names_per_type, True, taken), rng, config.zipf_s)
            for t in CUES
        }
        self.types = list(TYPE_WEIGHTS)
        self.type_p = np.array([TYPE_WEIGHTS[t] for t in self.types])

    def _filler(self, n):
        words = []
        for _ in range(n):
            # cue words leak into plain text so they are informative, not decisive
            if self.rng.random() < 0.05:
                words.append(self.cue_pool.draw())
            else:
                words.append(self.filler.draw())
        return words

    def _entity(self):
        rng = self.rng
        etype = self.types[rng.choice(len(self.types), p=self.type_p)]
        n = 1 + int(rng.choice(3, p=LENGTHS[etype]))
        toks = [self.names[etype].draw() for _ in range(n)]
        tags = [f"B-{etype}"] + [f"I-{etype}"] * (n - 1)
        left, right = CUES[etype]
        pre = [left[rng.integers(len(left))]] if rng.random() < self.config.p_left_cue else []
        post = [right[rng.integers(len(right))]] if rng.random() < self.config.p_right_cue else []
        return pre + toks + post, ["O"] * len(pre) + tags + ["O"] * len(post)

    def sentence(self) -> Sentence:
        rng, cfg = self.rng, self.config
        if rng.random() < cfg.p_entity_free:
            toks = self._filler(int(rng.integers(4, 24)))
            return Sentence(tuple(toks), ("O",) * len(toks))
        n_ent = 1 + min(int(rng.poisson(cfg.mean_extra_entities)), 4)
        toks: list[str] = []
        tags: list[str] = []
        for _ in range(n_ent):
            gap = self._filler(int(rng.integers(0, 6)))
            toks += gap
            tags += ["O"] * len(gap)
            et, eg = self._entity()
            toks += et
            tags += eg
        tail = self._filler(int(rng.integers(1, 6)))
        if tail[-1] != ".":
            tail.append(".")
        toks += tail
        tags += ["O"] * len(tail)
        return Sentence(tuple(toks), tuple(tags))

    def corpus(self, n: int, split: str) -> Corpus:
        return Corpus(tuple(self.sentence() for _ in range(n)), split)


def make_splits(config: SyntheticConfig = SyntheticConfig()) -> dict[str, Corpus]:
    """Train/dev/test corpora drawn from one generator, in that order."""
    gen = SyntheticNER(config)
    return {
        "train": gen.corpus(config.n_train, "train"),
        "dev": gen.corpus(config.n_dev, "dev"),
        "test": gen.corpus(config.n_test, "test"),
    }
