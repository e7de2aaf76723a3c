"""Corpus data model, column file formats, preprocessing and tree paths.

Sentences carry tokens, dependency heads (-1 = root) and per-token predicate
flags. Each marked predicate has one slot per case (NOM/ACC/DAT) whose
filler is a token index, the author or reader entity, or NULL. Slot
categories: OVERT (argument with a visible surface case marker, excluded
from evaluation), CASE (direct dependent with a hidden marker), ZERO (no
direct dependency), EXO (author/reader), NULL (case absent).

File format (annotated), one token per line, tab separated, blank line
between sentences, optional leading "#" comment lines per sentence:

    INDEX SURFACE POS DPOS INFL HEAD PRED NOM ACC DAT NOM_CAT ACC_CAT DAT_CAT

PRED is Y or _. Case columns hold a 0-based token index, A (author),
R (reader), N (null) or X (antecedent in a preceding sentence); "_" for
non-predicates (and for predicates whose slots were dropped by
preprocessing). The raw format is the first 7 columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import FormatError, PaskitError

CASES = ("NOM", "ACC", "DAT")
CATEGORIES = ("OVERT", "CASE", "ZERO", "EXO", "NULL")

AUTHOR_EXPRESSIONS = ("私", "僕", "我々", "弊社")
READER_EXPRESSIONS = ("あなた", "君", "客", "皆様")


@dataclass(frozen=True)
class Filler:
    """A slot filler: an in-sentence token, an exophora entity, or nothing."""

    kind: str  # token | author | reader | null | inter
    index: int = -1

    def is_token(self) -> bool:
        return self.kind == "token"

    def __repr__(self):
        return f"Filler({self.index})" if self.kind == "token" else f"Filler.{self.kind.upper()}"


AUTHOR = Filler("author")
READER = Filler("reader")
NULL = Filler("null")
INTER_SENTENTIAL = Filler("inter")


def token_filler(index: int) -> Filler:
    return Filler("token", index)


@dataclass(frozen=True)
class Token:
    surface: str
    pos: str
    detailed_pos: str
    inflection: str


@dataclass
class Sentence:
    tokens: list[Token]
    heads: list[int]
    predicate_flags: list[bool]

    def __len__(self) -> int:
        return len(self.tokens)

    def predicates(self) -> list[int]:
        return [i for i, p in enumerate(self.predicate_flags) if p]

    def validate_tree(self) -> None:
        n = len(self.tokens)
        if n == 0:
            raise FormatError("empty sentence")
        if len(self.heads) != n or len(self.predicate_flags) != n:
            raise FormatError("token/head/predicate length mismatch")
        roots = [i for i, h in enumerate(self.heads) if h == -1]
        if len(roots) != 1:
            raise FormatError(f"expected exactly one root, found {len(roots)}")
        for i, h in enumerate(self.heads):
            if h != -1 and not (0 <= h < n):
                raise FormatError(f"head {h} of token {i} out of range")
            if h == i:
                raise FormatError(f"token {i} is its own head")
        # reachability from the root proves acyclicity for n edges
        children: list[list[int]] = [[] for _ in range(n)]
        for i, h in enumerate(self.heads):
            if h != -1:
                children[h].append(i)
        seen = 0
        stack = [roots[0]]
        while stack:
            seen += 1
            stack.extend(children[stack.pop()])
        if seen != n:
            raise FormatError("dependency heads contain a cycle")


@dataclass
class GoldSlot:
    case: str
    filler: Filler
    category: str
    aliases: frozenset[Filler] | None = None

    def alias_set(self) -> frozenset[Filler]:
        return self.aliases if self.aliases is not None else frozenset({self.filler})


@dataclass
class AnnotatedSentence:
    sentence: Sentence
    slots: dict[tuple[int, str], GoldSlot]
    comments: tuple[str, ...] = ()

    def slot_predicates(self) -> list[int]:
        return sorted({p for p, _ in self.slots})


@dataclass
class Corpus:
    sentences: list[AnnotatedSentence]

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass
class RawCorpus:
    sentences: list[Sentence]
    skipped_no_predicate: int = 0

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass
class PreprocessReport:
    inter_sentential_nulled: int = 0
    predicates_excluded: int = 0


# -- category rules -----------------------------------------------------------


def valid_categories(sentence: Sentence, predicate: int, filler: Filler) -> set[str]:
    """Categories consistent with the tree for this filler."""
    if filler.kind == "null":
        return {"NULL"}
    if filler.kind in ("author", "reader"):
        return {"EXO"}
    if filler.kind == "inter":
        return {"ZERO"}
    if sentence.heads[filler.index] == predicate:
        return {"OVERT", "CASE"}
    return {"ZERO"}


def check_slot(sentence: Sentence, predicate: int, slot: GoldSlot, where: str = "") -> None:
    if slot.filler.is_token():
        idx = slot.filler.index
        if not (0 <= idx < len(sentence)):
            raise FormatError(f"{where}filler index {idx} out of range")
        if sentence.predicate_flags[idx]:
            raise FormatError(f"{where}filler {idx} is a predicate token")
    if slot.category not in CATEGORIES:
        raise FormatError(f"{where}unknown category {slot.category!r}")
    allowed = valid_categories(sentence, predicate, slot.filler)
    if slot.category not in allowed:
        raise FormatError(
            f"{where}category {slot.category} inconsistent with filler "
            f"{slot.filler!r} (expected one of {sorted(allowed)})"
        )


# -- parsing -------------------------------------------------------------------


def _parse_filler(text: str, line_no: int) -> Filler:
    if text == "A":
        return AUTHOR
    if text == "R":
        return READER
    if text == "N":
        return NULL
    if text == "X":
        return INTER_SENTENTIAL
    try:
        return token_filler(int(text))
    except ValueError:
        raise FormatError(f"line {line_no}: bad filler {text!r}") from None


def _filler_text(filler: Filler) -> str:
    return {"author": "A", "reader": "R", "null": "N", "inter": "X"}.get(
        filler.kind, str(filler.index)
    )


def _iter_blocks(path):
    """Yield (first_line_no, comments, rows) per sentence block."""
    comments: list[str] = []
    rows: list[tuple[int, list[str]]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if rows:
                    yield rows[0][0], comments, rows
                comments, rows = [], []
                continue
            if line.startswith("#"):
                comments.append(line)
                continue
            rows.append((line_no, line.split("\t")))
    if rows:
        yield rows[0][0], comments, rows


def _parse_sentence_rows(rows, expect_columns: int):
    tokens, heads, flags = [], [], []
    for position, (line_no, cols) in enumerate(rows):
        if len(cols) != expect_columns:
            raise FormatError(
                f"line {line_no}: expected {expect_columns} columns, got {len(cols)}"
            )
        try:
            index = int(cols[0])
        except ValueError:
            raise FormatError(f"line {line_no}: bad token index {cols[0]!r}") from None
        if index != position:
            raise FormatError(f"line {line_no}: token index {index} out of order")
        if not cols[1]:
            raise FormatError(f"line {line_no}: empty surface")
        try:
            head = int(cols[5])
        except ValueError:
            raise FormatError(f"line {line_no}: bad head {cols[5]!r}") from None
        if cols[6] not in ("Y", "_"):
            raise FormatError(f"line {line_no}: bad predicate flag {cols[6]!r}")
        tokens.append(Token(cols[1], cols[2], cols[3], cols[4]))
        heads.append(head)
        flags.append(cols[6] == "Y")
    return Sentence(tokens, heads, flags)


def parse_annotated(path) -> Corpus:
    """Read the 13-column annotated format, validating every invariant."""
    sentences = []
    for first_line, comments, rows in _iter_blocks(path):
        try:
            sentence = _parse_sentence_rows(rows, 13)
            sentence.validate_tree()
        except FormatError as exc:
            raise FormatError(f"{path}: {exc}") from None
        slots: dict[tuple[int, str], GoldSlot] = {}
        for position, (line_no, cols) in enumerate(rows):
            filler_cols, cat_cols = cols[7:10], cols[10:13]
            if not sentence.predicate_flags[position]:
                if any(c != "_" for c in filler_cols + cat_cols):
                    raise FormatError(f"{path}: line {line_no}: slots on a non-predicate")
                continue
            if all(c == "_" for c in filler_cols + cat_cols):
                continue  # predicate excluded by preprocessing: parse kept, no slots
            for case, filler_text, cat_text in zip(CASES, filler_cols, cat_cols):
                if filler_text == "_" or cat_text == "_":
                    raise FormatError(
                        f"{path}: line {line_no}: predicate needs all three {'/'.join(CASES)} slots"
                    )
                slot = GoldSlot(case, _parse_filler(filler_text, line_no), cat_text)
                try:
                    check_slot(sentence, position, slot, where=f"line {line_no}: {case}: ")
                except FormatError as exc:
                    raise FormatError(f"{path}: {exc}") from None
                slots[(position, case)] = slot
        sentences.append(AnnotatedSentence(sentence, slots, tuple(comments)))
    return Corpus(sentences)


def parse_raw(path) -> RawCorpus:
    """Read the 7-column raw format; sentences without predicates are skipped."""
    sentences = []
    skipped = 0
    for first_line, _comments, rows in _iter_blocks(path):
        try:
            sentence = _parse_sentence_rows(rows, 7)
            sentence.validate_tree()
        except FormatError as exc:
            raise FormatError(f"{path}: {exc}") from None
        if not any(sentence.predicate_flags):
            skipped += 1
            continue
        sentences.append(sentence)
    return RawCorpus(sentences, skipped)


# -- serialization -------------------------------------------------------------


def _token_columns(sentence: Sentence, i: int) -> list[str]:
    tok = sentence.tokens[i]
    return [
        str(i),
        tok.surface,
        tok.pos,
        tok.detailed_pos,
        tok.inflection,
        str(sentence.heads[i]),
        "Y" if sentence.predicate_flags[i] else "_",
    ]


def serialize_annotated(corpus: Corpus) -> str:
    blocks = []
    for annotated in corpus.sentences:
        lines = list(annotated.comments)
        for i in range(len(annotated.sentence)):
            cols = _token_columns(annotated.sentence, i)
            if annotated.sentence.predicate_flags[i] and (i, "NOM") in annotated.slots:
                for case in CASES:
                    cols.append(_filler_text(annotated.slots[(i, case)].filler))
                for case in CASES:
                    cols.append(annotated.slots[(i, case)].category)
            else:
                cols.extend(["_"] * 6)
            lines.append("\t".join(cols))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def serialize_raw(raw: RawCorpus) -> str:
    blocks = []
    for sentence in raw.sentences:
        blocks.append(
            "\n".join("\t".join(_token_columns(sentence, i)) for i in range(len(sentence)))
        )
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def write_annotated(corpus: Corpus, path) -> None:
    Path(path).write_text(serialize_annotated(corpus), encoding="utf-8")


def write_raw(raw: RawCorpus, path) -> None:
    Path(path).write_text(serialize_raw(raw), encoding="utf-8")


# -- preprocessing --------------------------------------------------------------


def preprocess(corpus: Corpus) -> tuple[Corpus, PreprocessReport]:
    """Rewrite inter-sentential fillers to NULL, then drop predicates whose
    slots share a filler across cases (tokens and parses are kept)."""
    report = PreprocessReport()
    out = []
    for annotated in corpus.sentences:
        slots: dict[tuple[int, str], GoldSlot] = {}
        for key, slot in annotated.slots.items():
            if slot.filler.kind == "inter":
                slots[key] = replace(slot, filler=NULL, category="NULL")
                report.inter_sentential_nulled += 1
            else:
                slots[key] = replace(slot)
        for predicate in sorted({p for p, _ in slots}):
            fillers = [slots[(predicate, c)].filler for c in CASES if (predicate, c) in slots]
            non_null = [f for f in fillers if f.kind != "null"]
            if len(non_null) != len(set(non_null)):
                for case in CASES:
                    slots.pop((predicate, case), None)
                report.predicates_excluded += 1
        out.append(AnnotatedSentence(annotated.sentence, slots, annotated.comments))
    return Corpus(out), report


def map_exophora_expressions(corpus: Corpus) -> Corpus:
    """Attach evaluation alias sets: a gold token from the author list also
    matches AUTHOR (and symmetrically), likewise for the reader list. Fillers
    themselves are never rewritten."""
    author_set = set(AUTHOR_EXPRESSIONS)
    reader_set = set(READER_EXPRESSIONS)
    out = []
    for annotated in corpus.sentences:
        sentence = annotated.sentence
        in_sentence_authors = [
            token_filler(i)
            for i, tok in enumerate(sentence.tokens)
            if tok.surface in author_set and not sentence.predicate_flags[i]
        ]
        in_sentence_readers = [
            token_filler(i)
            for i, tok in enumerate(sentence.tokens)
            if tok.surface in reader_set and not sentence.predicate_flags[i]
        ]
        slots = {}
        for key, slot in annotated.slots.items():
            aliases = {slot.filler}
            if slot.filler.is_token():
                surface = sentence.tokens[slot.filler.index].surface
                if surface in author_set:
                    aliases.add(AUTHOR)
                elif surface in reader_set:
                    aliases.add(READER)
            elif slot.filler.kind == "author":
                aliases.update(in_sentence_authors)
            elif slot.filler.kind == "reader":
                aliases.update(in_sentence_readers)
            slots[key] = replace(slot, aliases=frozenset(aliases))
        out.append(AnnotatedSentence(sentence, slots, annotated.comments))
    return Corpus(out)


# -- tree paths -----------------------------------------------------------------


def dependency_path(sentence: Sentence, predicate: int, candidate: int) -> list[int]:
    """Unique tree path from candidate to predicate, inclusive, via the
    lowest common ancestor."""
    n = len(sentence)
    if not (0 <= predicate < n and 0 <= candidate < n):
        raise PaskitError(f"path endpoints out of range: {candidate}, {predicate}")
    up_from_candidate = [candidate]
    node = candidate
    while sentence.heads[node] != -1:
        node = sentence.heads[node]
        up_from_candidate.append(node)
    positions = {tok: i for i, tok in enumerate(up_from_candidate)}
    node = predicate
    up_from_predicate = [predicate]
    while node not in positions:
        node = sentence.heads[node]
        if node == -1:
            raise PaskitError("disconnected dependency tree")  # unreachable for valid trees
        up_from_predicate.append(node)
    lca_pos = positions[node]
    return up_from_candidate[: lca_pos + 1] + up_from_predicate[::-1][1:]
