import pytest

from paskit import corpus as cp
from paskit import precision
from paskit.generator import GeneratorConfig
from paskit.validator import ValidatorConfig


@pytest.fixture
def f64():
    with precision.precision("f64"):
        yield


def noun(surface, infl="wa"):
    return cp.Token(surface, "N", "common", infl)


def verb(surface, infl="base"):
    return cp.Token(surface, "V", "verb", infl)


def two_predicate_sentence():
    # sea wa / fish wo / eat-v0 / boat no / man wa / watch-v1(root)
    tokens = [
        noun("sea"), noun("fish", "wo"), verb("v0"),
        noun("boat", "no"), noun("man"), verb("v1"),
    ]
    heads = [2, 2, 5, 4, 5, -1]
    flags = [False, False, True, False, False, True]
    sentence = cp.Sentence(tokens, heads, flags)
    slots = {
        (2, "NOM"): cp.GoldSlot("NOM", cp.token_filler(0), "CASE"),
        (2, "ACC"): cp.GoldSlot("ACC", cp.token_filler(1), "OVERT"),
        (2, "DAT"): cp.GoldSlot("DAT", cp.NULL, "NULL"),
        (5, "NOM"): cp.GoldSlot("NOM", cp.token_filler(4), "CASE"),
        (5, "ACC"): cp.GoldSlot("ACC", cp.token_filler(0), "ZERO"),
        (5, "DAT"): cp.GoldSlot("DAT", cp.AUTHOR, "EXO"),
    }
    return cp.AnnotatedSentence(sentence, slots)


def single_predicate_sentence():
    tokens = [noun("dog"), noun("park", "ni"), verb("v2", "polite")]
    heads = [2, 2, -1]
    flags = [False, False, True]
    sentence = cp.Sentence(tokens, heads, flags)
    slots = {
        (2, "NOM"): cp.GoldSlot("NOM", cp.token_filler(0), "CASE"),
        (2, "ACC"): cp.GoldSlot("ACC", cp.NULL, "NULL"),
        (2, "DAT"): cp.GoldSlot("DAT", cp.READER, "EXO"),
    }
    return cp.AnnotatedSentence(sentence, slots)


@pytest.fixture
def toy_corpus():
    return cp.Corpus([two_predicate_sentence(), single_predicate_sentence()])


@pytest.fixture
def toy_gcfg():
    return GeneratorConfig(
        word_dim=6, pos_dim=3, dpos_dim=3, infl_dim=2,
        lstm_hidden=5, lstm_layers=2, path_hidden=4, fnn_hidden=7, dropout=0.0,
    )


@pytest.fixture
def toy_vcfg():
    return ValidatorConfig(word_dim=6, fnn_hidden=7, dropout=0.0)
