"""Vocabularies and pre-trained word-vector loading.

The word vocabulary reserves rows for the unknown word and for the three
special candidates (author, reader, null), which also gives the validator's
embedding table somewhere to look those candidates up. Vectors are read
from the standard text layout, one "word v1 ... vd" line each; words missing
from the file keep their random initialization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, RawCorpus
from .errors import FormatError
from .layers import embedding_init
from .rng import RngStream

log = logging.getLogger(__name__)

UNK_WORD = "<unk>"
AUTHOR_WORD = "<author>"
READER_WORD = "<reader>"
NULL_WORD = "<null>"
WORD_RESERVED = (UNK_WORD, AUTHOR_WORD, READER_WORD, NULL_WORD)
TAG_RESERVED = (UNK_WORD,)


@dataclass
class Vocabulary:
    items: list[str]
    reserved: tuple[str, ...]

    def __post_init__(self):
        self._index = {item: i for i, item in enumerate(self.items)}
        if len(self._index) != len(self.items):
            raise FormatError("duplicate vocabulary entries")

    @classmethod
    def build(cls, observed, reserved: tuple[str, ...]) -> "Vocabulary":
        items = list(reserved)
        known = set(items)
        for item in observed:
            if item not in known:
                known.add(item)
                items.append(item)
        return cls(items, reserved)

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def index(self, item: str) -> int:
        idx = self._index.get(item)
        return self._index[UNK_WORD] if idx is None else idx

    def real_items(self) -> list[str]:
        return self.items[len(self.reserved) :]


@dataclass
class Vocabularies:
    word: Vocabulary
    pos: Vocabulary
    dpos: Vocabulary
    infl: Vocabulary

    def to_meta(self) -> dict:
        return {
            "word": self.word.items,
            "pos": self.pos.items,
            "dpos": self.dpos.items,
            "infl": self.infl.items,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "Vocabularies":
        return cls(
            Vocabulary(list(meta["word"]), WORD_RESERVED),
            Vocabulary(list(meta["pos"]), TAG_RESERVED),
            Vocabulary(list(meta["dpos"]), TAG_RESERVED),
            Vocabulary(list(meta["infl"]), TAG_RESERVED),
        )


def build_vocabularies(corpus: Corpus, raw: RawCorpus | None = None) -> Vocabularies:
    """Vocabulary from the training corpus (min frequency 1). Words seen only
    in the raw corpus map to the unknown row, so they are not added here."""
    sentences = [a.sentence for a in corpus.sentences]
    words, pos, dpos, infl = [], [], [], []
    for sentence in sentences:
        for tok in sentence.tokens:
            words.append(tok.surface)
            pos.append(tok.pos)
            dpos.append(tok.detailed_pos)
            infl.append(tok.inflection)
    return Vocabularies(
        Vocabulary.build(words, WORD_RESERVED),
        Vocabulary.build(pos, TAG_RESERVED),
        Vocabulary.build(dpos, TAG_RESERVED),
        Vocabulary.build(infl, TAG_RESERVED),
    )


@dataclass
class EmbeddingTable:
    vocabulary: Vocabulary
    matrix: np.ndarray  # |V| x dim
    coverage: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def load_embeddings(path, vocabulary: Vocabulary, dim: int, rng: RngStream) -> EmbeddingTable:
    """Copy matching rows from a word-vector text file; everything else stays
    randomly initialized. Duplicate lines: the last occurrence wins."""
    matrix = embedding_init(rng, len(vocabulary), dim)
    matched: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise FormatError(
                    f"{path}: line {line_no}: expected {dim} values, got {len(values)}"
                )
            if word not in vocabulary:
                continue
            try:
                vector = np.asarray([float(v) for v in values], dtype=matrix.dtype)
            except ValueError:
                raise FormatError(f"{path}: line {line_no}: non-numeric value") from None
            if word in matched:
                log.warning("%s: line %d: duplicate vector for %r, keeping the last", path, line_no, word)
            matrix[vocabulary.index(word)] = vector
            matched.add(word)
    real = vocabulary.real_items()
    coverage = (len(matched & set(real)) / len(real)) if real else 0.0
    return EmbeddingTable(vocabulary, matrix, coverage)
