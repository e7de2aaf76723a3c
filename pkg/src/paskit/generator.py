"""Head-selection argument scorer.

A stacked bidirectional LSTM encodes the sentence from concatenated word /
POS / detailed-POS / inflection embeddings. For every predicate and every
candidate, a bidirectional LSTM over the dependency path contributes a
relation feature, and one feed-forward scorer per case maps
(predicate state, candidate state, path state) to a scalar. A softmax over
the whole candidate set - all non-predicate tokens, then the author and
reader entities, then the null candidate - yields a per-case distribution,
so probabilities compete across candidates instead of being scored
independently per pair.

The author/reader/null candidates are not produced by the encoder; they own
learned vectors in both the candidate space and the path space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import corpus as cp
from .autodiff import Graph, Node
from .embeddings import AUTHOR_WORD, NULL_WORD, READER_WORD, Vocabularies
from .errors import PaskitError
from .layers import bilstm_final, bilstm_init, bilstm_tokens, embedding_init, fnn_apply, fnn_init
from .optim import ParameterStore
from .rng import RngStream

SPECIAL_CANDIDATES = ("author", "reader", "null")


@dataclass
class GeneratorConfig:
    word_dim: int = 100
    pos_dim: int = 10
    dpos_dim: int = 10
    infl_dim: int = 9
    lstm_hidden: int = 256
    lstm_layers: int = 3
    path_hidden: int = 256
    fnn_hidden: int = 1000
    dropout: float = 0.5  # scorer input/hidden; 0 disables

    @property
    def token_dim(self) -> int:
        return self.word_dim + self.pos_dim + self.dpos_dim + self.infl_dim

    @property
    def state_dim(self) -> int:
        return 2 * self.lstm_hidden

    @property
    def path_dim(self) -> int:
        return 2 * self.path_hidden

    @property
    def scorer_input_dim(self) -> int:
        return 2 * self.state_dim + self.path_dim


@dataclass
class CandidateSet:
    """Fixed candidate order for one sentence: non-predicate tokens in
    sentence order, then author, reader, null."""

    tokens: list[int]

    @property
    def size(self) -> int:
        return len(self.tokens) + 3

    @property
    def author_pos(self) -> int:
        return len(self.tokens)

    @property
    def reader_pos(self) -> int:
        return len(self.tokens) + 1

    @property
    def null_pos(self) -> int:
        return len(self.tokens) + 2

    def position_of(self, filler: cp.Filler) -> int:
        if filler.kind == "token":
            try:
                return self.tokens.index(filler.index)
            except ValueError:
                raise PaskitError(f"gold filler {filler!r} is not a candidate") from None
        if filler.kind == "author":
            return self.author_pos
        if filler.kind == "reader":
            return self.reader_pos
        if filler.kind == "null":
            return self.null_pos
        raise PaskitError(f"filler {filler!r} has no candidate position")

    def filler_at(self, position: int) -> cp.Filler:
        if position < len(self.tokens):
            return cp.token_filler(self.tokens[position])
        return (cp.AUTHOR, cp.READER, cp.NULL)[position - len(self.tokens)]

    def word_ids(self, sentence: cp.Sentence, vocabs: Vocabularies) -> list[int]:
        ids = [vocabs.word.index(sentence.tokens[i].surface) for i in self.tokens]
        ids.append(vocabs.word.index(AUTHOR_WORD))
        ids.append(vocabs.word.index(READER_WORD))
        ids.append(vocabs.word.index(NULL_WORD))
        return ids


def build_candidate_set(sentence: cp.Sentence) -> CandidateSet:
    return CandidateSet([i for i in range(len(sentence)) if not sentence.predicate_flags[i]])


def init_generator_params(
    store: ParameterStore,
    cfg: GeneratorConfig,
    vocabs: Vocabularies,
    rng: RngStream,
    pretrained_words: np.ndarray | None = None,
) -> None:
    if pretrained_words is not None:
        if pretrained_words.shape != (len(vocabs.word), cfg.word_dim):
            raise PaskitError(
                f"pretrained matrix shape {pretrained_words.shape} != "
                f"({len(vocabs.word)}, {cfg.word_dim})"
            )
        store.add("gen.emb.word", pretrained_words.copy())
    else:
        store.add("gen.emb.word", embedding_init(rng, len(vocabs.word), cfg.word_dim))
    store.add("gen.emb.pos", embedding_init(rng, len(vocabs.pos), cfg.pos_dim))
    store.add("gen.emb.dpos", embedding_init(rng, len(vocabs.dpos), cfg.dpos_dim))
    store.add("gen.emb.infl", embedding_init(rng, len(vocabs.infl), cfg.infl_dim))
    in_dim = cfg.token_dim
    for layer in range(cfg.lstm_layers):
        bilstm_init(store, f"gen.enc.l{layer}", in_dim, cfg.lstm_hidden, rng)
        in_dim = cfg.state_dim
    bilstm_init(store, "gen.path", cfg.word_dim + cfg.pos_dim, cfg.path_hidden, rng)
    for name in SPECIAL_CANDIDATES:
        store.add(f"gen.cand.{name}", embedding_init(rng, 1, cfg.state_dim))
        store.add(f"gen.pathc.{name}", embedding_init(rng, 1, cfg.path_dim))
    for case in cp.CASES:
        fnn_init(store, f"gen.fnn.{case}", cfg.scorer_input_dim, cfg.fnn_hidden, 1, rng)


class SentenceEncoding:
    """Graph fragments for one sentence, shared across its predicates."""

    def __init__(self, g: Graph, sentence: cp.Sentence, store, cfg, vocabs):
        self.g = g
        self.sentence = sentence
        self.store = store
        self.cfg = cfg
        if len(sentence) == 0:
            raise PaskitError("cannot encode an empty sentence")
        word_ids = [vocabs.word.index(t.surface) for t in sentence.tokens]
        pos_ids = [vocabs.pos.index(t.pos) for t in sentence.tokens]
        dpos_ids = [vocabs.dpos.index(t.detailed_pos) for t in sentence.tokens]
        infl_ids = [vocabs.infl.index(t.inflection) for t in sentence.tokens]
        self.word_rows = g.gather(g.param(store, "gen.emb.word"), word_ids)
        self.pos_rows = g.gather(g.param(store, "gen.emb.pos"), pos_ids)
        features = g.concat(
            [
                self.word_rows,
                self.pos_rows,
                g.gather(g.param(store, "gen.emb.dpos"), dpos_ids),
                g.gather(g.param(store, "gen.emb.infl"), infl_ids),
            ],
            axis=1,
        )
        xs = [
            g.slice(features, slice(t, t + 1), slice(None)) for t in range(len(sentence))
        ]
        for layer in range(cfg.lstm_layers):
            xs = bilstm_tokens(g, xs, store, f"gen.enc.l{layer}", cfg.lstm_hidden)
        self.states = xs  # one (1 x state_dim) node per token
        self._path_cache: dict[int, Node] = {}
        self._path_token_cache: dict[int, Node] = {}

    def _path_token(self, index: int) -> Node:
        node = self._path_token_cache.get(index)
        if node is None:
            g = self.g
            word = g.slice(self.word_rows, slice(index, index + 1), slice(None))
            pos = g.slice(self.pos_rows, slice(index, index + 1), slice(None))
            node = self._path_token_cache[index] = g.concat([word, pos], axis=1)
        return node

    def path_state(self, predicate: int, candidate: int) -> Node:
        """Bidirectional LSTM over the candidate-to-predicate tree path."""
        key = candidate * len(self.sentence) + predicate
        node = self._path_cache.get(key)
        if node is None:
            path = cp.dependency_path(self.sentence, predicate, candidate)
            xs = [self._path_token(i) for i in path]
            node = self._path_cache[key] = bilstm_final(
                self.g, xs, self.store, "gen.path", self.cfg.path_hidden
            )
        return node


def build_distributions(
    g: Graph,
    sentence: cp.Sentence,
    store: ParameterStore,
    cfg: GeneratorConfig,
    vocabs: Vocabularies,
    train: bool = False,
    tag: str | None = None,
    predicates: list[int] | None = None,
    candidates: CandidateSet | None = None,
) -> tuple[CandidateSet, dict[tuple[int, str], Node]]:
    """Per-(predicate, case) softmax distributions over the candidate set.

    Distribution nodes are named "dist/{tag}/p{predicate}/{case}" when a tag
    is given. `predicates` restricts which predicates get scored;
    `candidates` overrides the candidate order (tests use this to check
    scorer equivariance).
    """
    encoding = SentenceEncoding(g, sentence, store, cfg, vocabs)
    cand_set = candidates if candidates is not None else build_candidate_set(sentence)
    if predicates is None:
        predicates = sentence.predicates()

    distributions: dict[tuple[int, str], Node] = {}
    for predicate in predicates:
        if not sentence.predicate_flags[predicate]:
            raise PaskitError(f"token {predicate} is not a predicate")
        h_pred = encoding.states[predicate]
        arg_rows = [encoding.states[i] for i in cand_set.tokens]
        path_rows = [encoding.path_state(predicate, i) for i in cand_set.tokens]
        for name in SPECIAL_CANDIDATES:
            arg_rows.append(g.param(store, f"gen.cand.{name}"))
            path_rows.append(g.param(store, f"gen.pathc.{name}"))
        ones = g.const(np.ones((cand_set.size, 1)))
        features = g.concat(
            [
                g.matmul(ones, h_pred),
                g.concat(arg_rows, axis=0),
                g.concat(path_rows, axis=0),
            ],
            axis=1,
        )
        for case in cp.CASES:
            scores = fnn_apply(
                g, features, store, f"gen.fnn.{case}", dropout=cfg.dropout, train=train
            )
            dist = g.softmax(g.reshape(scores, (1, cand_set.size)))
            if tag is not None:
                g.name_node(dist, f"dist/{tag}/p{predicate}/{case}")
            distributions[(predicate, case)] = dist
    return cand_set, distributions


def predict(
    sentence: cp.Sentence,
    store: ParameterStore,
    cfg: GeneratorConfig,
    vocabs: Vocabularies,
) -> dict[tuple[int, str], cp.Filler]:
    """Argmax filler per (predicate, case); ties go to the lowest candidate
    position; the null candidate maps to the NULL filler."""
    if not sentence.predicates():
        return {}
    g = Graph()
    cand_set, dists = build_distributions(g, sentence, store, cfg, vocabs, train=False)
    g.evaluate()
    out = {}
    for key, node in dists.items():
        probs = g.value(node)[0]
        out[key] = cand_set.filler_at(int(np.argmax(probs)))
    return out
