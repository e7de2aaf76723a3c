"""Pseudo-corpus generation by embedding-similarity word swapping.

For every word the top-20 nearest vocabulary words by cosine similarity are
precomputed (brute force; vocabularies here are desk scale). A swap picks
one gold argument token per sentence uniformly, then replaces its surface
with a neighbor sampled proportionally to the raw dot product raised to an
even power r (r=10 by default), normalized over the neighbor set. Trees,
tags and gold slots stay untouched, so every structural invariant of the
corpus survives; swapped sentences carry a "# pseudo" comment line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import corpus as cp
from .embeddings import EmbeddingTable
from .errors import PaskitError
from .rng import RngStream


@dataclass
class NeighborEntry:
    word: str
    cosine: float
    dot: float


@dataclass
class NeighborTable:
    neighbors: dict[str, list[NeighborEntry]]

    def entries(self, word: str) -> list[NeighborEntry]:
        return self.neighbors.get(word, [])


@dataclass
class SwapPolicy:
    exponent: int = 10
    neighbor_count: int = 20
    size_multiplier: float = 1.0

    def validate(self) -> None:
        if self.exponent <= 0 or self.exponent % 2 != 0:
            raise PaskitError("swap exponent must be even and positive")
        if self.neighbor_count < 1:
            raise PaskitError("neighbor count must be >= 1")


def build_neighbors(table: EmbeddingTable, count: int = 20) -> NeighborTable:
    """Top-`count` nearest real words per real word, ranked by cosine
    similarity (ties by vocabulary order), self excluded."""
    words = table.vocabulary.real_items()
    if len(words) < 2:
        raise PaskitError("need at least two words to build a neighbor table")
    offset = len(table.vocabulary.reserved)
    vectors = np.asarray(table.matrix[offset:], dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    dots = vectors @ vectors.T
    cosines = dots / safe[:, None] / safe[None, :]
    neighbors: dict[str, list[NeighborEntry]] = {}
    for i, word in enumerate(words):
        order = np.argsort(-cosines[i], kind="stable")
        entries = []
        for j in order:
            if j == i:
                continue
            entries.append(NeighborEntry(words[j], float(cosines[i, j]), float(dots[i, j])))
            if len(entries) == count:
                break
        neighbors[word] = entries
    return NeighborTable(neighbors)


def swap_weights(word: str, table: NeighborTable, policy: SwapPolicy) -> np.ndarray:
    entries = table.entries(word)
    return np.asarray([e.dot for e in entries], dtype=np.float64) ** policy.exponent


def swap_probability(word: str, other: str, table: NeighborTable, policy: SwapPolicy) -> float:
    """p(word -> other), proportional to dot^r over the neighbor set;
    0 when `other` is not a neighbor or all weights vanish."""
    policy.validate()
    entries = table.entries(word)
    weights = swap_weights(word, table, policy)
    total = weights.sum()
    if total <= 0.0:
        return 0.0
    for entry, weight in zip(entries, weights):
        if entry.word == other:
            return float(weight / total)
    return 0.0


def sample_swap(word: str, table: NeighborTable, policy: SwapPolicy, rng: RngStream) -> str | None:
    """One neighbor draw; None when the word has no usable neighbors."""
    entries = table.entries(word)
    if not entries:
        return None
    weights = swap_weights(word, table, policy)
    if weights.sum() <= 0.0:
        return None
    return entries[rng.choice_index(weights)].word


@dataclass
class AugmentReport:
    generated: int = 0
    swapped: int = 0
    copied_no_arguments: int = 0
    copied_no_neighbors: int = 0
    swap_counts: dict = field(default_factory=dict)


def _argument_tokens(annotated: cp.AnnotatedSentence) -> list[int]:
    out = sorted(
        {slot.filler.index for slot in annotated.slots.values() if slot.filler.is_token()}
    )
    return out


def generate_pseudo_corpus(
    corpus: cp.Corpus,
    table: NeighborTable,
    policy: SwapPolicy,
    seed: int,
) -> tuple[cp.Corpus, AugmentReport]:
    """One pseudo sentence per source sentence (times the size multiplier):
    a uniformly chosen gold argument token's surface is swapped for a
    sampled neighbor; tags, heads and slots are unchanged."""
    policy.validate()
    rng = RngStream(seed, (23,))
    report = AugmentReport()
    out = []
    target = int(round(len(corpus.sentences) * policy.size_multiplier))
    for i in range(target):
        annotated = corpus.sentences[i % len(corpus.sentences)]
        sentence = annotated.sentence
        arguments = _argument_tokens(annotated)
        new_tokens = list(sentence.tokens)
        comment = "# pseudo"
        if not arguments:
            report.copied_no_arguments += 1
        else:
            position = arguments[rng.integers(0, len(arguments))]
            old = new_tokens[position]
            replacement = sample_swap(old.surface, table, policy, rng)
            if replacement is None:
                report.copied_no_neighbors += 1
            else:
                new_tokens[position] = cp.Token(
                    replacement, old.pos, old.detailed_pos, old.inflection
                )
                report.swapped += 1
                key = (old.surface, replacement)
                report.swap_counts[key] = report.swap_counts.get(key, 0) + 1
        new_sentence = cp.Sentence(
            new_tokens, list(sentence.heads), list(sentence.predicate_flags)
        )
        slots = {key: cp.GoldSlot(s.case, s.filler, s.category) for key, s in annotated.slots.items()}
        out.append(cp.AnnotatedSentence(new_sentence, slots, (comment,)))
        report.generated += 1
    return cp.Corpus(out), report
