"""Deterministic synthetic corpora with planted selectional preferences.

The generated language is head-final: each clause is a run of noun
dependents followed by its predicate; with two clauses the first predicate
depends on the second. Every noun type belongs to one preference class, and
every (predicate type, case) pair is compatible with exactly one class
(the three cases of a predicate use three distinct classes). Gold fillers
are drawn from the compatible class at a configured purity, enforced as a
running quota so the emitted frequency never drops below it.

Slot realizations per case follow configured rates:
  * OVERT: a direct dependent whose inflection column carries the overt
    case marker (ga/wo/ni) - trivially readable, excluded from evaluation;
  * CASE: a direct dependent with the topic marker wa - the case must be
    recovered from class compatibility;
  * ZERO: the filler has no direct dependency on its predicate - either a
    genitive-like modifier (no) of a noun in the clause, or, with two
    clauses, a wa-marked dependent of the other clause's predicate (the
    shared-argument pattern);
  * EXO/NULL: nothing is realized in the sentence. Whether an unfilled slot
    is author/reader or NULL is a deterministic property of the
    (predicate, case) pair, so the distinction is learnable.

Ambiguity is kept structural, not systematic: when a sentence has two
clauses the two predicates use disjoint class triples, and distractors and
impure fillers are biased toward classes neither predicate selects, so the
planted filler is recoverable from class knowledge alone for most slots.
Raw sentences come from the same process with annotations withheld.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import corpus as cp
from .errors import ConfigError
from .rng import RngStream

OVERT_MARKERS = {"NOM": "ga", "ACC": "wo", "DAT": "ni"}
TOPIC_MARKER = "wa"
MODIFIER_MARKER = "no"
DISTRACTOR_MARKERS = ("mo", "kara", "made")
PREDICATE_INFLECTIONS = ("base", "past", "te")
POLITE_INFLECTION = "polite"  # marks clauses whose unfilled slots are exophoric


@dataclass
class SynthConfig:
    predicates: int = 12
    nouns: int = 24
    classes: int = 6
    purity: float = 0.9
    min_len: int = 4
    max_len: int = 14
    two_clause_rate: float = 0.6
    distractor_rate: float = 0.7  # chance of each of up to 2 distractors per clause
    distractor_offclass: float = 0.8
    misleading_topic_rate: float = 0.15  # distractor takes wa instead of a plain marker
    rate_overt: float = 0.15
    rate_case: float = 0.35
    rate_zero: float = 0.25
    rate_exo: float = 0.10
    rate_null: float = 0.15
    labeled_count: int = 200
    raw_count: int = 2000
    dev_count: int = 200
    test_count: int = 500
    embedding_dim: int = 16  # synthetic "pretrained" word vectors
    embedding_noise: float = 0.35  # per-noun jitter around its class centroid
    seed: int = 0

    def rates(self) -> dict[str, float]:
        return {
            "OVERT": self.rate_overt,
            "CASE": self.rate_case,
            "ZERO": self.rate_zero,
            "EXO": self.rate_exo,
            "NULL": self.rate_null,
        }

    def validate(self) -> None:
        rates = self.rates()
        if any(r < 0 for r in rates.values()):
            raise ConfigError("slot rates must be nonnegative")
        if abs(sum(rates.values()) - 1.0) > 1e-9:
            raise ConfigError(f"slot rates must sum to 1, got {sum(rates.values())}")
        if not 0.0 < self.purity <= 1.0:
            raise ConfigError("purity must be in (0, 1]")
        if self.classes < 4:
            raise ConfigError("need at least 4 preference classes (3 per predicate + slack)")
        if self.nouns < self.classes:
            raise ConfigError("need at least one noun per class")
        if self.predicates < 1:
            raise ConfigError("need at least one predicate type")
        if self.min_len < 2 or self.max_len < self.min_len:
            raise ConfigError("bad sentence length bounds")


class _Plan:
    """Type-level facts derived deterministically from the seed: noun classes,
    per-(predicate, case) compatible class, exophora behavior of unfilled
    slots, and which predicate pairs use disjoint class triples."""

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.noun_class = [i % cfg.classes for i in range(cfg.nouns)]
        self.class_nouns: list[list[int]] = [[] for _ in range(cfg.classes)]
        for noun, cls in enumerate(self.noun_class):
            self.class_nouns[cls].append(noun)
        rng = RngStream(cfg.seed, (97,))
        self.case_class: dict[tuple[int, str], int] = {}
        self.exo_taking: dict[tuple[int, str], str | None] = {}
        for p in range(cfg.predicates):
            perm = [int(c) for c in rng.permutation(cfg.classes)[:3]]
            exo_share = cfg.rate_exo / (cfg.rate_exo + cfg.rate_null) if cfg.rate_exo else 0.0
            exo_assigned = 0
            for ci, case in enumerate(cp.CASES):
                self.case_class[(p, case)] = perm[ci]
                takes_exo = rng.random(()) < exo_share and exo_assigned < 2
                if takes_exo:
                    # distinct entities per predicate, so a sentence can never
                    # get the same exophora filler in two cases (which the
                    # duplicate-filler exclusion would throw away)
                    first = "A" if p % 2 == 0 else "R"
                    entity = first if exo_assigned == 0 else ("R" if first == "A" else "A")
                    self.exo_taking[(p, case)] = entity
                    exo_assigned += 1
                else:
                    self.exo_taking[(p, case)] = None
        self.partners: list[list[int]] = []
        for p in range(cfg.predicates):
            mine = self.compatible_classes(p)
            self.partners.append(
                [q for q in range(cfg.predicates) if q != p and not (mine & self.compatible_classes(q))]
            )

    def compatible_classes(self, predicate: int) -> set[int]:
        return {self.case_class[(predicate, case)] for case in cp.CASES}


class _PurityQuota:
    """Keeps the compatible-class frequency of emitted fillers >= purity."""

    def __init__(self, purity: float):
        self.purity = purity
        self.compatible = {case: 0 for case in cp.CASES}
        self.total = {case: 0 for case in cp.CASES}

    def draw_compatible(self, case: str, rng: RngStream) -> bool:
        must = self.compatible[case] / (self.total[case] + 1) < self.purity
        take = True if must else rng.random(()) < self.purity
        self.total[case] += 1
        if take:
            self.compatible[case] += 1
        return take


@dataclass(eq=False)  # identity semantics: drafts are placeholders for positions
class _TokenDraft:
    surface: str
    pos: str
    dpos: str
    infl: str
    head: "object" = None  # _TokenDraft | None (None = root)
    predicate: bool = False


def _noun_token(plan: _Plan, noun: int, marker: str) -> _TokenDraft:
    return _TokenDraft(f"n{noun}", "N", "common", marker)


def _pick(rng: RngStream, pool: list[int]) -> int:
    return pool[rng.integers(0, len(pool))]


def _filler_noun(plan: _Plan, rng: RngStream, predicate_classes: set[int], cls: int,
                 compatible: bool) -> int:
    """Compatible fillers come from the slot's class; impure ones from classes
    the predicate does not select at all, so they cannot look like fillers of
    its other cases."""
    if compatible:
        return _pick(rng, plan.class_nouns[cls])
    free = [n for n in range(plan.cfg.nouns) if plan.noun_class[n] not in predicate_classes]
    return _pick(rng, free if free else plan.class_nouns[cls])


def _distractor_noun(plan: _Plan, rng: RngStream, used_classes: set[int]) -> int:
    off = [n for n in range(plan.cfg.nouns) if plan.noun_class[n] not in used_classes]
    if off and rng.random(()) < plan.cfg.distractor_offclass:
        return _pick(rng, off)
    return rng.integers(0, plan.cfg.nouns)


class _Clause:
    def __init__(self, predicate: int, pred_tok: _TokenDraft):
        self.predicate = predicate
        self.pred_tok = pred_tok
        self.deps: list[_TokenDraft] = []  # direct dependents, pre-permutation
        self.modifiers: dict[int, list[_TokenDraft]] = {}  # dep index -> modifiers
        self.fillers: dict[str, tuple[_TokenDraft, str]] = {}  # case -> (token, category)
        self.realizations: dict[str, str] = {}


def _build_sentence(plan: _Plan, rng: RngStream, quota: _PurityQuota) -> cp.AnnotatedSentence:
    cfg = plan.cfg
    n_clauses = 2 if rng.random(()) < cfg.two_clause_rate else 1
    first = rng.integers(0, cfg.predicates)
    predicates = [first]
    if n_clauses == 2:
        partners = plan.partners[first]
        predicates.append(_pick(rng, partners) if partners else rng.integers(0, cfg.predicates))
    used_classes: set[int] = set()
    for p in predicates:
        used_classes |= plan.compatible_classes(p)

    clauses = []
    for p in predicates:
        pred_tok = _TokenDraft(
            f"v{p}", "V", "verb",
            PREDICATE_INFLECTIONS[rng.integers(0, len(PREDICATE_INFLECTIONS))],
            predicate=True,
        )
        clause = _Clause(p, pred_tok)
        for case in cp.CASES:
            roll = rng.random(())
            acc = 0.0
            for kind, rate in cfg.rates().items():
                acc += rate
                if roll < acc:
                    clause.realizations[case] = kind
                    break
            else:
                clause.realizations[case] = "NULL"
        if any(
            clause.realizations[case] in ("EXO", "NULL")
            and plan.exo_taking[(p, case)] is not None
            for case in cp.CASES
        ):
            pred_tok.infl = POLITE_INFLECTION  # honorific-style cue for exophora
        clauses.append(clause)

    # pass 1: direct dependents (overt/hidden-marker fillers, then distractors)
    for clause in clauses:
        pclasses = plan.compatible_classes(clause.predicate)
        for case in cp.CASES:
            kind = clause.realizations[case]
            if kind not in ("OVERT", "CASE"):
                continue
            cls = plan.case_class[(clause.predicate, case)]
            noun = _filler_noun(plan, rng, pclasses, cls, quota.draw_compatible(case, rng))
            marker = OVERT_MARKERS[case] if kind == "OVERT" else TOPIC_MARKER
            tok = _noun_token(plan, noun, marker)
            clause.fillers[case] = (tok, kind)
            clause.deps.append(tok)
        for _ in range(2):
            if rng.random(()) < cfg.distractor_rate:
                noun = _distractor_noun(plan, rng, used_classes)
                if rng.random(()) < cfg.misleading_topic_rate:
                    marker = TOPIC_MARKER
                else:
                    marker = DISTRACTOR_MARKERS[rng.integers(0, len(DISTRACTOR_MARKERS))]
                clause.deps.append(_noun_token(plan, noun, marker))

    # pass 2: zero fillers, attached without a direct dependency on their
    # predicate - under the other clause's predicate when there is one,
    # otherwise as a genitive modifier inside the own clause
    for ci, clause in enumerate(clauses):
        pclasses = plan.compatible_classes(clause.predicate)
        for case in cp.CASES:
            if clause.realizations[case] != "ZERO":
                continue
            cls = plan.case_class[(clause.predicate, case)]
            noun = _filler_noun(plan, rng, pclasses, cls, quota.draw_compatible(case, rng))
            other = clauses[1 - ci] if n_clauses == 2 else None
            if other is not None and rng.random(()) < 0.5:
                tok = _noun_token(plan, noun, TOPIC_MARKER)
                other.deps.append(tok)
            else:
                tok = _noun_token(plan, noun, MODIFIER_MARKER)
                if not clause.deps:  # a modifier needs something to modify
                    clause.deps.append(
                        _noun_token(plan, _distractor_noun(plan, rng, used_classes),
                                    DISTRACTOR_MARKERS[0])
                    )
                anchor = rng.integers(0, len(clause.deps))
                clause.modifiers.setdefault(anchor, []).append(tok)
            clause.fillers[case] = (tok, "ZERO")

    # linearize: modifiers directly before their noun, dependents in a random
    # order before the predicate, first clause before the second; the last
    # predicate is the root and earlier predicates depend on it
    drafts: list[_TokenDraft] = []
    for clause in clauses:
        order = [int(i) for i in rng.permutation(len(clause.deps))]
        for old_pos in order:
            dep = clause.deps[old_pos]
            for mod in clause.modifiers.get(old_pos, []):
                mod.head = dep
                drafts.append(mod)
            dep.head = clause.pred_tok
            drafts.append(dep)
        drafts.append(clause.pred_tok)
    for ci, clause in enumerate(clauses):
        clause.pred_tok.head = clauses[-1].pred_tok if ci < len(clauses) - 1 else None

    # length bounds: pad the first clause with distractors; trim surplus
    # plain-marker distractors (never fillers or modifier anchors)
    filler_toks = {id(t) for c in clauses for t, _ in c.fillers.values()}
    anchored = {id(m.head) for c in clauses for mods in c.modifiers.values() for m in mods}
    while len(drafts) < cfg.min_len:
        noun = _distractor_noun(plan, rng, used_classes)
        pad = _noun_token(plan, noun, DISTRACTOR_MARKERS[rng.integers(0, len(DISTRACTOR_MARKERS))])
        pad.head = clauses[0].pred_tok
        drafts.insert(0, pad)
    if len(drafts) > cfg.max_len:
        removable = [
            t for t in drafts
            if not t.predicate and id(t) not in filler_toks and id(t) not in anchored
            and t.infl in DISTRACTOR_MARKERS
        ]
        for t in removable[: len(drafts) - cfg.max_len]:
            drafts.remove(t)

    index = {id(t): i for i, t in enumerate(drafts)}
    sentence = cp.Sentence(
        tokens=[cp.Token(t.surface, t.pos, t.dpos, t.infl) for t in drafts],
        heads=[-1 if t.head is None else index[id(t.head)] for t in drafts],
        predicate_flags=[t.predicate for t in drafts],
    )

    slots: dict[tuple[int, str], cp.GoldSlot] = {}
    for clause in clauses:
        pi = index[id(clause.pred_tok)]
        for case in cp.CASES:
            if case in clause.fillers:
                tok, category = clause.fillers[case]
                slots[(pi, case)] = cp.GoldSlot(case, cp.token_filler(index[id(tok)]), category)
            else:
                exo = plan.exo_taking[(clause.predicate, case)]
                if exo is not None:
                    filler = cp.AUTHOR if exo == "A" else cp.READER
                    slots[(pi, case)] = cp.GoldSlot(case, filler, "EXO")
                else:
                    slots[(pi, case)] = cp.GoldSlot(case, cp.NULL, "NULL")
    return cp.AnnotatedSentence(sentence, slots)


def _generate_split(plan: _Plan, rng: RngStream, count: int) -> cp.Corpus:
    quota = _PurityQuota(plan.cfg.purity)
    return cp.Corpus([_build_sentence(plan, rng, quota) for _ in range(count)])


def _make_embeddings(plan: _Plan, rng: RngStream) -> dict[str, list[float]]:
    """Synthetic "pretrained" word vectors: nouns cluster around their class
    centroid (so embedding neighbors are class-mates, as corpus-trained
    vectors would be); predicates get unstructured vectors."""
    cfg = plan.cfg
    d = cfg.embedding_dim
    scale = 1.0 / (d**0.5)
    centroids = [rng.normal(0.0, scale, (d,)) for _ in range(cfg.classes)]
    vectors: dict[str, list[float]] = {}
    for noun in range(cfg.nouns):
        vec = centroids[plan.noun_class[noun]] + rng.normal(0.0, cfg.embedding_noise * scale, (d,))
        vectors[f"n{noun}"] = [float(x) for x in vec]
    for p in range(cfg.predicates):
        vectors[f"v{p}"] = [float(x) for x in rng.normal(0.0, scale, (d,))]
    return vectors


def embedding_lines(vectors: dict[str, list[float]]) -> str:
    lines = [
        word + " " + " ".join(format(x, ".6f") for x in vec) for word, vec in vectors.items()
    ]
    return "\n".join(lines) + "\n"


@dataclass
class SynthOutput:
    labeled: cp.Corpus
    raw: cp.RawCorpus
    dev: cp.Corpus
    test: cp.Corpus
    embeddings: dict[str, list[float]] = field(default_factory=dict)
    report: dict = field(default_factory=dict)


def generate(cfg: SynthConfig) -> SynthOutput:
    """Four disjoint splits drawn from independent child streams of the seed."""
    cfg.validate()
    plan = _Plan(cfg)
    root = RngStream(cfg.seed, (11,))
    labeled = _generate_split(plan, root.child(0), cfg.labeled_count)
    raw_annotated = _generate_split(plan, root.child(1), cfg.raw_count)
    dev = _generate_split(plan, root.child(2), cfg.dev_count)
    test = _generate_split(plan, root.child(3), cfg.test_count)
    raw = cp.RawCorpus([a.sentence for a in raw_annotated.sentences], 0)
    embeddings = _make_embeddings(plan, root.child(4))
    report = {
        "labeled": len(labeled.sentences),
        "raw": len(raw.sentences),
        "dev": len(dev.sentences),
        "test": len(test.sentences),
        "embedding_words": len(embeddings),
    }
    return SynthOutput(labeled, raw, dev, test, embeddings, report)
