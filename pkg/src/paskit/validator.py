"""Scoring network for generated argument distributions.

The validator owns its own word embedding table, disjoint from the
generator's, and sees only the predicate word and one attention-style
summary per case: the candidate distribution's weighted sum over validator
embeddings of the candidate words (sentence tokens plus the author, reader
and null candidates). Because the weighting uses softmax probabilities
rather than the argmax, gradients flow back through the coupling into the
generator's scores. A two-layer network emits three logits, one sigmoid
score in [0, 1] per case.

Deliberately no encoder states or other sentence context reach this
network; it stays weaker than the generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import corpus as cp
from .autodiff import Graph, Node
from .embeddings import Vocabularies
from .generator import CandidateSet
from .layers import embedding_init, fnn_apply, fnn_init
from .optim import ParameterStore
from .rng import RngStream


@dataclass
class ValidatorConfig:
    word_dim: int = 100
    fnn_hidden: int = 1000
    dropout: float = 0.5

    @property
    def input_dim(self) -> int:
        return 4 * self.word_dim  # predicate + one summary per case


def init_validator_params(
    store: ParameterStore,
    cfg: ValidatorConfig,
    vocabs: Vocabularies,
    rng: RngStream,
    pretrained_words: np.ndarray | None = None,
) -> None:
    if pretrained_words is not None:
        store.add("val.emb.word", pretrained_words.copy())
    else:
        store.add("val.emb.word", embedding_init(rng, len(vocabs.word), cfg.word_dim))
    fnn_init(store, "val.fnn", cfg.input_dim, cfg.fnn_hidden, 3, rng)


def build_case_representation(
    g: Graph,
    distribution: Node,
    candidate_word_ids: list[int],
    store: ParameterStore,
) -> Node:
    """Probability-weighted sum of validator embeddings over the candidate set."""
    rows = g.gather(g.param(store, "val.emb.word"), candidate_word_ids)
    return g.matmul(distribution, rows)


def build_scores(
    g: Graph,
    sentence: cp.Sentence,
    predicate: int,
    cand_set: CandidateSet,
    dists_by_case: dict[str, Node],
    store: ParameterStore,
    cfg: ValidatorConfig,
    vocabs: Vocabularies,
    train: bool = False,
    tag: str | None = None,
) -> Node:
    """Sigmoid scores (1 x 3, NOM/ACC/DAT order) for one predicate."""
    word_ids = cand_set.word_ids(sentence, vocabs)
    pred_row = g.gather(
        g.param(store, "val.emb.word"), [vocabs.word.index(sentence.tokens[predicate].surface)]
    )
    parts = [pred_row]
    for case in cp.CASES:
        parts.append(build_case_representation(g, dists_by_case[case], word_ids, store))
    x = g.concat(parts, axis=1)
    scores = g.sigmoid(fnn_apply(g, x, store, "val.fnn", dropout=cfg.dropout, train=train))
    if tag is not None:
        g.name_node(scores, f"vscore/{tag}/p{predicate}")
    return scores
