import math

import numpy as np
import pytest

import scalar_oracle as oracle
from paskit import corpus as cp
from paskit import precision
from paskit.autodiff import Graph
from paskit.embeddings import build_vocabularies
from paskit.errors import PaskitError
from paskit.generator import (
    CandidateSet,
    GeneratorConfig,
    build_candidate_set,
    build_distributions,
    init_generator_params,
    predict,
)
from paskit.layers import fnn_init, lstm_init, lstm_sequence
from paskit.optim import ParameterStore
from paskit.rng import RngStream
from paskit.training import init_train_state


@pytest.fixture
def f64():
    with precision.precision("f64"):
        yield


def make_state(corpus, gcfg, seed=11):
    return init_train_state(corpus, gcfg, None, seed)


# -- candidate sets -------------------------------------------------------------


def test_candidate_set_excludes_all_predicates(toy_corpus):
    sentence = toy_corpus.sentences[0].sentence
    cand = build_candidate_set(sentence)
    assert cand.tokens == [0, 1, 3, 4]
    assert cand.size == 7
    assert cand.author_pos == 4 and cand.reader_pos == 5 and cand.null_pos == 6


def test_candidate_positions_roundtrip(toy_corpus):
    cand = build_candidate_set(toy_corpus.sentences[0].sentence)
    for pos in range(cand.size):
        assert cand.position_of(cand.filler_at(pos)) == pos
    assert cand.filler_at(cand.null_pos) == cp.NULL


def test_gold_filler_on_predicate_not_a_candidate(toy_corpus):
    cand = build_candidate_set(toy_corpus.sentences[0].sentence)
    with pytest.raises(PaskitError, match="candidate"):
        cand.position_of(cp.token_filler(2))


# -- encoder ---------------------------------------------------------------------


def test_encode_shapes_single_token(f64, toy_gcfg):
    sentence = cp.Sentence([cp.Token("x", "V", "v", "b")], [-1], [True])
    corpus = cp.Corpus([cp.AnnotatedSentence(sentence, {})])
    state = make_state(corpus, toy_gcfg)
    g = Graph()
    from paskit.generator import SentenceEncoding

    enc = SentenceEncoding(g, sentence, state.gen_store, toy_gcfg, state.vocabs)
    g.evaluate()
    assert len(enc.states) == 1
    assert g.value(enc.states[0]).shape == (1, toy_gcfg.state_dim)


def test_encode_empty_sentence_rejected(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    g = Graph()
    from paskit.generator import SentenceEncoding

    empty = cp.Sentence([], [], [])
    with pytest.raises(PaskitError, match="empty"):
        SentenceEncoding(g, empty, state.gen_store, toy_gcfg, state.vocabs)


def test_encode_reversal_changes_values_but_not_shape(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    sentence = toy_corpus.sentences[1].sentence
    reversed_sentence = cp.Sentence(
        list(reversed(sentence.tokens)),
        [len(sentence) - 1 - h if h != -1 else -1 for h in reversed(sentence.heads)],
        list(reversed(sentence.predicate_flags)),
    )
    from paskit.generator import SentenceEncoding

    g = Graph()
    enc_a = SentenceEncoding(g, sentence, state.gen_store, toy_gcfg, state.vocabs)
    enc_b = SentenceEncoding(g, reversed_sentence, state.gen_store, toy_gcfg, state.vocabs)
    g.evaluate()
    assert g.value(enc_a.states[0]).shape == g.value(enc_b.states[-1]).shape


def test_zero_parameters_give_zero_states(f64, toy_corpus, toy_gcfg):
    # with all weights zero the LSTM input gate opens onto a zero candidate,
    # so cell and hidden states stay exactly zero regardless of forget bias
    state = make_state(toy_corpus, toy_gcfg)
    for name, arr in state.gen_store.params.items():
        arr[:] = 0.0
    sentence = toy_corpus.sentences[0].sentence
    from paskit.generator import SentenceEncoding

    g = Graph()
    enc = SentenceEncoding(g, sentence, state.gen_store, toy_gcfg, state.vocabs)
    g.evaluate()
    for node in enc.states:
        assert np.array_equal(g.value(node), np.zeros((1, toy_gcfg.state_dim)))


def test_lstm_zero_weights_hand_computation(f64):
    # one step by hand: i=sigmoid(0)=0.5, g=tanh(0)=0 -> c=0 -> h=0; with
    # forget bias 1 the forget gate is sigmoid(1) but c_prev=0 so still 0
    store = ParameterStore()
    rng = RngStream(0)
    lstm_init(store, "l", 3, 4, rng)
    store.params["l.W"][:] = 0.0
    g = Graph()
    xs = [g.const(np.ones((1, 3))), g.const(np.full((1, 3), -2.0))]
    states = lstm_sequence(g, xs, store, "l", 4)
    g.evaluate()
    for node in states:
        assert np.array_equal(g.value(node), np.zeros((1, 4)))


# -- path embeddings -------------------------------------------------------------


def test_path_state_shape_for_direct_dependent(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    sentence = toy_corpus.sentences[0].sentence
    from paskit.generator import SentenceEncoding

    g = Graph()
    enc = SentenceEncoding(g, sentence, state.gen_store, toy_gcfg, state.vocabs)
    node = enc.path_state(2, 0)
    g.evaluate()
    assert g.value(node).shape == (1, toy_gcfg.path_dim)
    assert cp.dependency_path(sentence, 2, 0) == [0, 2]


def test_special_candidates_use_learned_path_constants(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    sentence = toy_corpus.sentences[0].sentence
    g = Graph()
    cand, dists = build_distributions(
        g, sentence, state.gen_store, toy_gcfg, state.vocabs, predicates=[2]
    )
    g.evaluate()
    # the author row of the assembled feature matrix must contain the learned
    # constants exactly
    features_node = next(
        n for n in g.nodes if n.kind == "concat" and g.value(n).shape == (cand.size, toy_gcfg.scorer_input_dim)
    )
    features = g.value(features_node)
    author_row = features[cand.author_pos]
    expected_cand = state.gen_store.params["gen.cand.author"][0]
    expected_path = state.gen_store.params["gen.pathc.author"][0]
    assert np.array_equal(author_row[toy_gcfg.state_dim : 2 * toy_gcfg.state_dim], expected_cand)
    assert np.array_equal(author_row[2 * toy_gcfg.state_dim :], expected_path)


def test_identical_paths_give_identical_states(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    sentence = toy_corpus.sentences[0].sentence
    from paskit.generator import SentenceEncoding

    g = Graph()
    enc = SentenceEncoding(g, sentence, state.gen_store, toy_gcfg, state.vocabs)
    a = enc.path_state(2, 0)
    b = enc.path_state(2, 0)
    assert a is b  # cached: structurally identical path


# -- scoring and distributions ------------------------------------------------------


def test_distributions_sum_to_one_and_cover_candidates(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    annotated = toy_corpus.sentences[0]
    g = Graph()
    cand, dists = build_distributions(
        g, annotated.sentence, state.gen_store, toy_gcfg, state.vocabs
    )
    g.evaluate()
    n_non_pred = sum(not f for f in annotated.sentence.predicate_flags)
    for node in dists.values():
        probs = g.value(node)
        assert probs.shape == (1, n_non_pred + 3)
        assert abs(probs.sum() - 1.0) < 1e-6
        assert (probs >= 0).all()


def test_zero_scorer_weights_give_uniform_distribution(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    for case in cp.CASES:
        for suffix in ("W1", "b1", "W2", "b2"):
            state.gen_store.params[f"gen.fnn.{case}.{suffix}"][:] = 0.0
    g = Graph()
    cand, dists = build_distributions(
        g, toy_corpus.sentences[0].sentence, state.gen_store, toy_gcfg, state.vocabs
    )
    g.evaluate()
    for node in dists.values():
        assert np.allclose(g.value(node), 1.0 / cand.size)


def test_candidate_permutation_equivariance(f64, toy_corpus, toy_gcfg):
    # the same scorer is applied to every candidate row, so reordering the
    # candidate tokens permutes scores and probabilities exactly
    state = make_state(toy_corpus, toy_gcfg)
    sentence = toy_corpus.sentences[0].sentence
    base = build_candidate_set(sentence)
    swapped = CandidateSet([base.tokens[1], base.tokens[0]] + base.tokens[2:])

    def probs(cand_set):
        g = Graph()
        _, dists = build_distributions(
            g, sentence, state.gen_store, toy_gcfg, state.vocabs,
            predicates=[2], candidates=cand_set,
        )
        g.evaluate()
        return {case: g.value(dists[(2, case)])[0] for case in cp.CASES}

    p_base = probs(base)
    p_swap = probs(swapped)
    for case in cp.CASES:
        assert p_base[case][0] == pytest.approx(p_swap[case][1], abs=1e-12)
        assert p_base[case][1] == pytest.approx(p_swap[case][0], abs=1e-12)
        assert np.allclose(p_base[case][2:], p_swap[case][2:], atol=1e-12)


def test_distributions_match_scalar_oracle(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    annotated = toy_corpus.sentences[0]
    g = Graph()
    cand, dists = build_distributions(
        g, annotated.sentence, state.gen_store, toy_gcfg, state.vocabs
    )
    g.evaluate()
    for predicate in annotated.sentence.predicates():
        oracle_cand, oracle_dists = oracle.case_distributions(
            annotated.sentence, predicate, state.gen_store, toy_gcfg, state.vocabs
        )
        assert oracle_cand.tokens == cand.tokens
        for case in cp.CASES:
            engine = g.value(dists[(predicate, case)])[0]
            reference = oracle_dists[case]
            for a, b in zip(engine, reference):
                assert math.isclose(a, b, rel_tol=1e-10, abs_tol=1e-12)


def test_hand_computed_two_candidate_scorer(f64):
    # degenerate scorer: identity-ish weights, hand-checked softmax
    store = ParameterStore()
    rng = RngStream(0)
    fnn_init(store, "f", 2, 2, 1, rng)
    store.params["f.W1"][:] = [[1.0, 0.0], [0.0, 1.0]]
    store.params["f.b1"][:] = 0.0
    store.params["f.W2"][:] = [[1.0], [-1.0]]
    store.params["f.b2"][:] = 0.5
    g = Graph()
    x = g.const(np.array([[0.3, -0.2], [-0.5, 0.8]]))
    from paskit.layers import fnn_apply

    scores = fnn_apply(g, x, store, "f")
    g.evaluate()
    expected = [
        math.tanh(0.3) * 1.0 + math.tanh(-0.2) * -1.0 + 0.5,
        math.tanh(-0.5) * 1.0 + math.tanh(0.8) * -1.0 + 0.5,
    ]
    assert np.allclose(g.value(scores).ravel(), expected, atol=1e-10)


# -- prediction -----------------------------------------------------------------


def test_predict_maps_null_candidate_to_null_filler(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    results = predict(
        toy_corpus.sentences[0].sentence, state.gen_store, toy_gcfg, state.vocabs
    )
    assert set(results) == {(p, c) for p in (2, 5) for c in cp.CASES}
    for filler in results.values():
        assert filler.kind in ("token", "author", "reader", "null")


def test_predict_tie_breaks_to_lowest_position():
    cand = CandidateSet([0, 3])
    # exact tie between the first candidate and the null candidate (last
    # position): the lower position wins
    probs = np.array([0.3, 0.1, 0.0, 0.0, 0.3])
    assert cand.filler_at(int(np.argmax(probs))) == cp.token_filler(0)


def test_predict_deterministic_for_fixed_params(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    sentence = toy_corpus.sentences[0].sentence
    a = predict(sentence, state.gen_store, toy_gcfg, state.vocabs)
    b = predict(sentence, state.gen_store, toy_gcfg, state.vocabs)
    assert a == b


def test_predict_argmax_invariant_under_score_shift(f64, toy_corpus, toy_gcfg):
    state = make_state(toy_corpus, toy_gcfg)
    sentence = toy_corpus.sentences[0].sentence
    before = predict(sentence, state.gen_store, toy_gcfg, state.vocabs)
    for case in cp.CASES:
        state.gen_store.params[f"gen.fnn.{case}.b2"] += 10.0  # constant score shift
    after = predict(sentence, state.gen_store, toy_gcfg, state.vocabs)
    assert before == after


def test_gradient_reaches_gold_word_embedding(f64, toy_corpus, toy_gcfg):
    from paskit.training import supervised_loss_graph

    state = make_state(toy_corpus, toy_gcfg)
    g, _ = supervised_loss_graph(
        toy_corpus.sentences, state.gen_store, toy_gcfg, state.vocabs, train=False
    )
    g.evaluate()
    grads = g.gradients("loss")
    gold_word = toy_corpus.sentences[0].sentence.tokens[0].surface  # gold filler "sea"
    row = state.vocabs.word.index(gold_word)
    assert np.abs(grads["gen.emb.word"][row]).max() > 0.0
