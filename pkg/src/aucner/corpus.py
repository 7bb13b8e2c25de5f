"""CoNLL ingestion, BIO validation, vocabularies and the two-task label encoding."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TAG_RE = re.compile(r"^(?:O|[BI](?:-\S+)?)$")
DOCSTART = "-DOCSTART-"

# Index order of the collapsed tag set used by the 3-class head and the CRF.
TAGS = ("B", "I", "O")
TAG_INDEX = {t: i for i, t in enumerate(TAGS)}


class CorpusError(ValueError):
    pass


class ConllParseError(CorpusError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TagError(CorpusError):
    def __init__(self, tag: str, line: int | None = None, position: int | None = None):
        self.tag = tag
        self.line = line
        self.position = position
        where = f"line {line}: " if line is not None else ""
        if position is not None:
            where += f"position {position}: "
        super().__init__(f"{where}invalid BIO tag {tag!r}")


class EmptyCorpusError(CorpusError):
    pass


def split_tag(tag: str) -> tuple[str, str | None]:
    """``'B-PER' -> ('B', 'PER')``, ``'O' -> ('O', None)``, ``'I' -> ('I', None)``."""
    if tag == "O":
        return "O", None
    prefix, _, etype = tag.partition("-")
    return prefix, (etype or None)


def is_valid_tag(tag: str) -> bool:
    return bool(TAG_RE.match(tag))


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise CorpusError(
                f"{len(self.tokens)} tokens but {len(self.tags)} tags"
            )
        if not self.tokens:
            raise CorpusError("empty sentence")
        for i, tag in enumerate(self.tags):
            if not is_valid_tag(tag):
                raise TagError(tag, position=i)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_entity_tokens(self) -> int:
        return sum(1 for t in self.tags if t != "O")


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    split: str = "train"

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    @property
    def n_entity_tokens(self) -> int:
        return sum(s.n_entity_tokens for s in self.sentences)

    def tag_counts(self) -> dict[str, int]:
        """Token counts per full tag string (``B-PER``, ``O``, ...)."""
        return dict(Counter(t for s in self.sentences for t in s.tags))

    def label_distribution(self) -> dict[str, float]:
        """Percentage of tokens carrying each collapsed prefix B, I, O."""
        counts = Counter(split_tag(t)[0] for s in self.sentences for t in s.tags)
        total = sum(counts.values())
        if total == 0:
            return {k: 0.0 for k in TAGS}
        return {k: 100.0 * counts.get(k, 0) / total for k in TAGS}

    @property
    def entity_pct(self) -> float:
        n = self.n_tokens
        return 100.0 * self.n_entity_tokens / n if n else 0.0

    def subset(self, indices: Iterable[int], split: str | None = None) -> "Corpus":
        return Corpus(tuple(self.sentences[i] for i in indices), split or self.split)

    def stats(self) -> dict:
        return {
            "split": self.split,
            "sentences": len(self),
            "tokens": self.n_tokens,
            "label_distribution": self.label_distribution(),
            "tag_counts": self.tag_counts(),
        }


def _filter_type(tag: str, keep_type: str) -> str:
    prefix, etype = split_tag(tag)
    if prefix == "O" or etype != keep_type:
        return "O"
    return tag


def parse_conll(
    text: str,
    column: int = -1,
    split: str = "train",
    keep_type: str | None = None,
) -> Corpus:
    """Parse CoNLL-formatted text into a :class:`Corpus`.

    One token per line, whitespace-separated columns, blank lines between
    sentences. Lines starting with ``-DOCSTART-`` are skipped. The token is
    the first column and the tag is read from ``column`` (default: last).
    Every line in the file must have the same number of columns.

    When ``keep_type`` is given, entities of any other type are rewritten to
    ``O`` (single-type experiments).
    """
    sentences: list[Sentence] = []
    tokens: list[str] = []
    tags: list[str] = []
    n_cols: int | None = None

    def flush():
        if tokens:
            sentences.append(Sentence(tuple(tokens), tuple(tags)))
            tokens.clear()
            tags.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            flush()
            continue
        if line.startswith(DOCSTART):
            flush()
            continue
        cols = line.split()
        if len(cols) < 2:
            raise ConllParseError(f"expected at least 2 columns, got {len(cols)}", lineno)
        if n_cols is None:
            n_cols = len(cols)
        elif len(cols) != n_cols:
            raise ConllParseError(f"expected {n_cols} columns, got {len(cols)}", lineno)
        try:
            tag = cols[column]
        except IndexError:
            raise ConllParseError(f"no tag column {column}", lineno) from None
        if not is_valid_tag(tag):
            raise TagError(tag, line=lineno)
        if keep_type is not None:
            tag = _filter_type(tag, keep_type)
        tokens.append(cols[0])
        tags.append(tag)
    flush()

    if not sentences:
        raise EmptyCorpusError("no sentences in input")
    return Corpus(tuple(sentences), split)


def read_conll(path, column: int = -1, split: str | None = None, keep_type: str | None = None) -> Corpus:
    from pathlib import Path

    path = Path(path)
    return parse_conll(
        path.read_text(encoding="utf-8"),
        column=column,
        split=split or path.stem,
        keep_type=keep_type,
    )


def to_conll(corpus: Corpus) -> str:
    """Serialize as two-column ``token tag`` lines, blank line between sentences."""
    blocks = ["\n".join(f"{w} {t}" for w, t in zip(s.tokens, s.tags)) for s in corpus]
    return "\n\n".join(blocks) + "\n"


@dataclass
class BioReport:
    """Per-position validation outcome of a tag sequence."""

    errors: list[int] = field(default_factory=list)
    warnings: list[tuple[int, str]] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.errors

    @property
    def strict(self) -> bool:
        return not self.errors and not self.warnings


def validate_bio(tags: Sequence[str]) -> BioReport:
    """Check lexical validity and I-continuity.

    Lexically invalid positions go to ``errors``. An ``I`` whose predecessor
    is ``O``, the sentence start, or an entity of a different type is only a
    warning, since real corpora contain such sequences.
    """
    report = BioReport()
    prev = "O"
    for i, tag in enumerate(tags):
        if not is_valid_tag(tag):
            report.errors.append(i)
            prev = "O"
            continue
        prefix, etype = split_tag(tag)
        if prefix == "I":
            pprefix, ptype = split_tag(prev)
            if pprefix == "O":
                where = "sentence start" if i == 0 else "O"
                report.warnings.append((i, f"I after {where}"))
            elif ptype != etype:
                report.warnings.append((i, f"type mismatch {prev} -> {tag}"))
        prev = tag
    return report


@dataclass(frozen=True)
class TwoTaskLabels:
    """Parallel +1/-1 labels: inside-an-entity and begins-an-entity."""

    y_en: np.ndarray
    y_be: np.ndarray

    def __len__(self) -> int:
        return len(self.y_en)


def to_two_task(tags: Sequence[str]) -> TwoTaskLabels:
    """Encode BIO tags as (entity, begin) binary labels, dropping entity types."""
    n = len(tags)
    y_en = np.full(n, -1, dtype=np.int8)
    y_be = np.full(n, -1, dtype=np.int8)
    for i, tag in enumerate(tags):
        if not is_valid_tag(tag):
            raise TagError(tag, position=i)
        prefix = tag[0]
        if prefix != "O":
            y_en[i] = 1
            if prefix == "B":
                y_be[i] = 1
    return TwoTaskLabels(y_en, y_be)


def collapse_tags(tags: Sequence[str]) -> list[str]:
    return [t[0] for t in tags]


def tag_indices(tags: Sequence[str]) -> np.ndarray:
    """Collapsed tag ids in ``TAGS`` order."""
    return np.array([TAG_INDEX[t[0]] for t in tags], dtype=np.int64)


@dataclass(frozen=True)
class Vocab:
    """Word-to-index map; index 0 is shared by unknown words and padding."""

    word2idx: dict[str, int]
    min_count: int = 1
    UNK = 0

    @property
    def size(self) -> int:
        return len(self.word2idx) + 1

    def __len__(self) -> int:
        return self.size

    def __contains__(self, word: str) -> bool:
        return word in self.word2idx

    def index(self, word: str) -> int:
        return self.word2idx.get(word, self.UNK)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.word2idx.get(w, 0) for w in tokens], dtype=np.int64)

    def words(self) -> list[str]:
        return sorted(self.word2idx, key=self.word2idx.__getitem__)

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for w in self.words():
            h.update(w.encode("utf-8") + b"\n")
        return h.hexdigest()[:16]


def build_vocab(corpus: Corpus | Iterable[Sentence], min_count: int = 1) -> Vocab:
    """Index words seen at least ``min_count`` times, most frequent first.

    Ties in frequency are ordered lexicographically so the mapping is
    reproducible.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(w for s in corpus for w in s.tokens)
    kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    return Vocab({w: i for i, w in enumerate(kept, start=1)}, min_count)
