import math

import numpy as np
import pytest

import scalar_oracle as oracle
from paskit import corpus as cp
from paskit import precision
from paskit.autodiff import Graph
from paskit.generator import build_candidate_set, build_distributions
from paskit.optim import ParameterStore, adam_step
from paskit.rng import RngStream
from paskit.training import init_train_state
from paskit.validator import (
    ValidatorConfig,
    build_case_representation,
    build_scores,
    init_validator_params,
)


@pytest.fixture
def f64():
    with precision.precision("f64"):
        yield


def make_state(corpus, gcfg, vcfg, seed=13):
    return init_train_state(corpus, gcfg, vcfg, seed)


def representation(dist_row, word_ids, store):
    g = Graph()
    dist = g.const(np.asarray(dist_row))
    rep = build_case_representation(g, dist, word_ids, store)
    g.evaluate()
    return g.value(rep)[0]


@pytest.fixture
def val_store(toy_corpus, toy_vcfg):
    from paskit.embeddings import build_vocabularies

    vocabs = build_vocabularies(toy_corpus)
    store = ParameterStore()
    init_validator_params(store, toy_vcfg, vocabs, RngStream(3))
    return store, vocabs


def test_one_hot_attention_returns_exact_row(val_store):
    store, vocabs = val_store
    ids = [4, 7, 1, 2]
    dist = [0.0, 1.0, 0.0, 0.0]
    rep = representation(dist, ids, store)
    assert np.array_equal(rep, store.params["val.emb.word"][7])


def test_uniform_attention_is_mean_of_rows(val_store):
    store, vocabs = val_store
    ids = [3, 5]
    rep = representation([0.5, 0.5], ids, store)
    expected = store.params["val.emb.word"][[3, 5]].mean(axis=0)
    assert np.allclose(rep, expected, atol=1e-12)


def test_random_attention_matches_brute_force(f64, val_store):
    store, vocabs = val_store
    rng = RngStream(1)
    ids = [0, 2, 5, 7, 4]
    weights = rng.random((5,))
    dist = (weights / weights.sum()).tolist()
    rep = representation(dist, ids, store)
    table = store.params["val.emb.word"]
    expected = [
        sum(dist[i] * table[ids[i]][d] for i in range(5)) for d in range(table.shape[1])
    ]
    assert np.allclose(rep, expected, atol=1e-10)


def full_scores(state, annotated, gcfg, vcfg, train=False, rng_seed=77):
    g = Graph(rng=RngStream(rng_seed))
    sentence = annotated.sentence
    cand, dists = build_distributions(
        g, sentence, state.gen_store, gcfg, state.vocabs, train=False
    )
    nodes = {}
    for predicate in sentence.predicates():
        nodes[predicate] = build_scores(
            g, sentence, predicate, cand,
            {c: dists[(predicate, c)] for c in cp.CASES},
            state.val_store, vcfg, state.vocabs, train=train,
        )
    g.evaluate()
    return g, cand, dists, {p: g.value(n)[0] for p, n in nodes.items()}


def test_zero_weights_give_half_scores(toy_corpus, toy_gcfg, toy_vcfg):
    state = make_state(toy_corpus, toy_gcfg, toy_vcfg)
    for suffix in ("W1", "b1", "W2", "b2"):
        state.val_store.params[f"val.fnn.{suffix}"][:] = 0.0
    _, _, _, scores = full_scores(state, toy_corpus.sentences[0], toy_gcfg, toy_vcfg)
    for row in scores.values():
        assert np.allclose(row, 0.5)


def test_scores_in_unit_interval_for_random_weights(f64, toy_corpus, toy_gcfg, toy_vcfg):
    for seed in range(5):
        state = make_state(toy_corpus, toy_gcfg, toy_vcfg, seed=seed)
        state.val_store.params["val.fnn.W2"] *= 50  # push toward saturation
        _, _, _, scores = full_scores(state, toy_corpus.sentences[0], toy_gcfg, toy_vcfg)
        for row in scores.values():
            assert row.shape == (3,)
            assert ((row >= 0) & (row <= 1)).all()


def test_scores_match_scalar_oracle(f64, toy_corpus, toy_gcfg, toy_vcfg):
    state = make_state(toy_corpus, toy_gcfg, toy_vcfg)
    annotated = toy_corpus.sentences[0]
    _, cand, dists, scores = full_scores(state, annotated, toy_gcfg, toy_vcfg)
    g2 = Graph()
    for predicate, row in scores.items():
        oracle_cand, oracle_dists = oracle.case_distributions(
            annotated.sentence, predicate, state.gen_store, toy_gcfg, state.vocabs
        )
        expected = oracle.validator_scores(
            annotated.sentence, predicate, oracle_cand, oracle_dists,
            state.val_store, state.vocabs,
        )
        for a, b in zip(row, expected):
            assert math.isclose(a, b, rel_tol=1e-10, abs_tol=1e-12)


def test_eval_mode_is_pure_function(toy_corpus, toy_gcfg, toy_vcfg):
    state = make_state(toy_corpus, toy_gcfg, toy_vcfg)
    _, _, _, first = full_scores(state, toy_corpus.sentences[0], toy_gcfg, toy_vcfg)
    _, _, _, second = full_scores(state, toy_corpus.sentences[0], toy_gcfg, toy_vcfg)
    for p in first:
        assert np.array_equal(first[p], second[p])


def test_train_mode_dropout_changes_outputs(toy_corpus, toy_gcfg):
    vcfg = ValidatorConfig(word_dim=6, fnn_hidden=7, dropout=0.5)
    state = make_state(toy_corpus, toy_gcfg, vcfg)
    _, _, _, a = full_scores(state, toy_corpus.sentences[0], toy_gcfg, vcfg, train=True, rng_seed=1)
    _, _, _, b = full_scores(state, toy_corpus.sentences[0], toy_gcfg, vcfg, train=True, rng_seed=2)
    assert any(not np.array_equal(a[p], b[p]) for p in a)


def test_gradients_flow_through_coupling_into_generator(f64, toy_corpus, toy_gcfg, toy_vcfg):
    # with the validator frozen, the unsupervised loss still differentiates
    # through the attention coupling into generator scorer parameters
    from paskit.optim import frozen
    from paskit.training import unsupervised_loss_graph

    state = make_state(toy_corpus, toy_gcfg, toy_vcfg)
    raw = [toy_corpus.sentences[0].sentence]
    with frozen(state.val_store):
        g = unsupervised_loss_graph(
            raw, state.gen_store, state.val_store, toy_gcfg, toy_vcfg, state.vocabs,
            train=False,
        )
        g.evaluate()
        grads = g.gradients("loss")
    assert all(name.startswith("gen.") for name in grads)
    fnn_grad = np.abs(grads["gen.fnn.NOM.W2"]).max()
    assert fnn_grad > 0.0


def test_validator_update_never_touches_generator(f64, toy_corpus, toy_gcfg, toy_vcfg):
    from paskit.optim import frozen
    from paskit.training import validator_loss_graph

    state = make_state(toy_corpus, toy_gcfg, toy_vcfg)
    before = state.gen_store.fingerprint()
    with frozen(state.gen_store):
        g, _ = validator_loss_graph(
            toy_corpus.sentences[0], state.gen_store, state.val_store,
            toy_gcfg, toy_vcfg, state.vocabs, train=False,
        )
        g.evaluate()
        grads = g.gradients("loss")
    adam_step(state.val_store, grads)
    assert state.gen_store.fingerprint() == before
    assert all(name.startswith("val.") for name in grads)


def test_validator_sees_no_encoder_states(toy_corpus, toy_gcfg, toy_vcfg):
    # input dimensionality: one predicate embedding + three case summaries
    assert toy_vcfg.input_dim == 4 * toy_vcfg.word_dim
    state = make_state(toy_corpus, toy_gcfg, toy_vcfg)
    assert state.val_store.params["val.fnn.W1"].shape[0] == 4 * toy_vcfg.word_dim
