"""Micro-averaged precision/recall/F1 and validator score monitoring.

Two tasks are scored: "case" (gold arguments that depend directly on their
predicate with a hidden marker) and "zero" (gold arguments without a direct
dependency, including the author/reader entities). OVERT slots are excluded
before judging. A prediction counts as correct when it falls in the gold
slot's alias set. False positives on gold-NULL slots, and the FP half of a
wrong non-NULL prediction, are attributed to a task by the predicted
filler's own relation to the predicate: direct dependent -> case, anything
else (always including exophora) -> zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import corpus as cp
from .autodiff import Graph
from .errors import PaskitError
from .generator import GeneratorConfig, build_distributions, predict
from .validator import ValidatorConfig, build_scores

TASKS = ("case", "zero")


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def prf(self) -> tuple[float, float, float]:
        p = self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0
        r = self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return p, r, f1


@dataclass
class MetricsReport:
    counts: dict[tuple[str, str], Confusion] = field(default_factory=dict)

    def at(self, task: str, case: str) -> Confusion:
        key = (task, case)
        if key not in self.counts:
            self.counts[key] = Confusion()
        return self.counts[key]

    def pooled(self, task: str) -> Confusion:
        total = Confusion()
        for case in cp.CASES:
            c = self.at(task, case)
            total.tp += c.tp
            total.fp += c.fp
            total.fn += c.fn
        return total

    def f1(self, task: str, case: str = "ALL") -> float:
        c = self.pooled(task) if case == "ALL" else self.at(task, case)
        return c.prf()[2]

    def as_dict(self) -> dict:
        out = {}
        for task in TASKS:
            rows = {}
            for case in (*cp.CASES, "ALL"):
                c = self.pooled(task) if case == "ALL" else self.at(task, case)
                p, r, f1 = c.prf()
                rows[case] = {"P": p, "R": r, "F1": f1, "TP": c.tp, "FP": c.fp, "FN": c.fn}
            out[task] = rows
        return out


def gold_task(category: str) -> str:
    if category == "CASE":
        return "case"
    if category in ("ZERO", "EXO"):
        return "zero"
    raise PaskitError(f"no task for gold category {category}")


def predicted_task(sentence: cp.Sentence, predicate: int, filler: cp.Filler) -> str:
    """Task attribution for a predicted filler (exophora always count as zero)."""
    if filler.kind in ("author", "reader"):
        return "zero"
    if filler.is_token() and sentence.heads[filler.index] == predicate:
        return "case"
    return "zero"


def judge(
    sentence: cp.Sentence,
    predicate: int,
    slot: cp.GoldSlot,
    predicted: cp.Filler,
    report: MetricsReport,
) -> None:
    """Fold one (gold slot, prediction) pair into the confusion counts."""
    if slot.category == "OVERT":
        raise PaskitError("OVERT slots must be excluded before judging")
    gold_null = slot.filler.kind == "null"
    predicted_null = predicted.kind == "null"
    case = slot.case
    if gold_null and predicted_null:
        return
    if gold_null:
        report.at(predicted_task(sentence, predicate, predicted), case).fp += 1
        return
    task = gold_task(slot.category)
    if predicted_null:
        report.at(task, case).fn += 1
        return
    if predicted in slot.alias_set():
        report.at(task, case).tp += 1
    else:
        report.at(task, case).fn += 1
        report.at(predicted_task(sentence, predicate, predicted), case).fp += 1


def evaluate_predictions(
    corpus: cp.Corpus,
    predictions: dict[tuple[int, int, str], cp.Filler],
) -> MetricsReport:
    """Micro-averaged counts over all non-OVERT gold slots of the corpus.

    predictions is keyed by (sentence index, predicate index, case); a
    missing prediction counts as NULL.
    """
    report = MetricsReport()
    for si, annotated in enumerate(corpus.sentences):
        for (pred, case), slot in annotated.slots.items():
            if slot.category == "OVERT":
                continue
            predicted = predictions.get((si, pred, case), cp.NULL)
            judge(annotated.sentence, pred, slot, predicted, report)
    return report


def predict_corpus(
    corpus: cp.Corpus,
    store,
    cfg: GeneratorConfig,
    vocabs,
) -> dict[tuple[int, int, str], cp.Filler]:
    out = {}
    for si, annotated in enumerate(corpus.sentences):
        for (pred, case), filler in predict(annotated.sentence, store, cfg, vocabs).items():
            out[(si, pred, case)] = filler
    return out


def monitor_validator(
    corpus: cp.Corpus,
    gen_store,
    val_store,
    gcfg: GeneratorConfig,
    vcfg: ValidatorConfig,
    vocabs,
) -> dict[str, float]:
    """Mean validator score per case over slot-bearing predicates, computed
    from generator outputs with dropout off."""
    sums = np.zeros(3, dtype=np.float64)
    count = 0
    for annotated in corpus.sentences:
        predicates = annotated.slot_predicates()
        if not predicates:
            continue
        g = Graph()
        cand_set, dists = build_distributions(
            g, annotated.sentence, gen_store, gcfg, vocabs, train=False, predicates=predicates
        )
        score_nodes = {
            pred: build_scores(
                g,
                annotated.sentence,
                pred,
                cand_set,
                {c: dists[(pred, c)] for c in cp.CASES},
                val_store,
                vcfg,
                vocabs,
                train=False,
            )
            for pred in predicates
        }
        g.evaluate()
        for node in score_nodes.values():
            sums += g.value(node)[0].astype(np.float64)
            count += 1
    if count == 0:
        return {case: 0.0 for case in (*cp.CASES, "ALL")}
    means = sums / count
    result = {case: float(means[i]) for i, case in enumerate(cp.CASES)}
    result["ALL"] = float(means.mean())
    return result


# -- metrics files ---------------------------------------------------------

CSV_HEADER = "epoch,task,case,P,R,F1,TP,FP,FN,val_score_mean"


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def metrics_csv_lines(history: list[dict]) -> list[str]:
    lines = [CSV_HEADER]
    for record in history:
        tasks = record.get("tasks")
        if not tasks:
            continue
        val_scores = record.get("val_scores") or {}
        for task in TASKS:
            for case in (*cp.CASES, "ALL"):
                row = tasks[task][case]
                val = val_scores.get(case)
                lines.append(
                    ",".join(
                        [
                            str(record["epoch"]),
                            task,
                            case,
                            _fmt(row["P"]),
                            _fmt(row["R"]),
                            _fmt(row["F1"]),
                            str(row["TP"]),
                            str(row["FP"]),
                            str(row["FN"]),
                            "" if val is None else _fmt(val),
                        ]
                    )
                )
    return lines


def metrics_jsonl_lines(history: list[dict]) -> list[str]:
    return [json.dumps(record, sort_keys=True) for record in history]
