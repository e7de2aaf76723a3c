"""Losses and the alternating semi-supervised training schedule.

Three losses drive training:
  * supervised generator loss: mean over gold slots of -log p(gold filler);
  * validator loss: per-case binary cross-entropy against the error labels
    q (q = 1 iff the generator's argmax equals the gold filler), averaged
    over the sentence's predicates, with the generator frozen;
  * raw-corpus generator loss: mean of -log(validator score) over
    predicates and cases of unlabeled sentences, with the validator frozen,
    pushing the generator toward outputs the validator already trusts.

The schedule: the generator pretrains alone (Adam), the validator pretrains
for one epoch against the frozen generator (Adam), then adversarial cycles
run under Adagrad. Each cycle is one raw minibatch for the generator,
k single-sentence validator steps, and l supervised generator minibatches.
With k=16, l=4 and a generator minibatch of 16 sentences, each cycle
consumes 16 raw / 16 validator / 64 supervised sentences, so both the
raw:supervised and validator:supervised sentence ratios are 1/4.

Dropout follows the network being trained: the generator's scorer dropout
is active in its own supervised/raw steps, the validator's in its steps;
the frozen counterpart always runs deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import corpus as cp
from . import evaluation, precision
from .autodiff import Graph
from .checkpoint import load_checkpoint, save_checkpoint
from .embeddings import Vocabularies, build_vocabularies
from .errors import ConfigError, FrozenParameterError, PaskitError
from .generator import GeneratorConfig, build_distributions, init_generator_params
from .optim import ParameterStore, adagrad_step, adam_step, frozen
from .rng import RngStream
from .validator import ValidatorConfig, build_scores, init_validator_params


@dataclass
class ScheduleConfig:
    pretrain_generator_epochs: int = 2
    pretrain_validator_epochs: int = 1
    validator_steps: int = 16  # k: validator updates per cycle
    supervised_steps: int = 4  # l: supervised generator minibatches per cycle
    generator_batch: int = 16
    validator_batch: int = 1
    adam_lr: float = 1e-3
    adagrad_lr: float = 1e-2
    adversarial_epochs: int = 20
    cycles_per_epoch: int = 0  # 0: derived so supervised steps cover the corpus once

    def resolved_cycles(self, n_labeled: int) -> int:
        if self.cycles_per_epoch > 0:
            return self.cycles_per_epoch
        return max(1, math.ceil(n_labeled / (self.supervised_steps * self.generator_batch)))


# -- loss graphs ----------------------------------------------------------------


def supervised_loss_graph(
    batch: list[cp.AnnotatedSentence],
    gen_store: ParameterStore,
    gcfg: GeneratorConfig,
    vocabs: Vocabularies,
    rng: RngStream | None = None,
    train: bool = True,
) -> tuple[Graph, int]:
    """-log p(gold) averaged over every gold slot in the batch. Predicates
    whose slots were dropped by preprocessing contribute nothing."""
    g = Graph(rng=rng)
    gold_probs = []
    for si, annotated in enumerate(batch):
        predicates = annotated.slot_predicates()
        if not predicates:
            continue
        cand_set, dists = build_distributions(
            g, annotated.sentence, gen_store, gcfg, vocabs,
            train=train, tag=f"s{si}", predicates=predicates,
        )
        for (pred, case), dist in dists.items():
            pos = cand_set.position_of(annotated.slots[(pred, case)].filler)
            gold_probs.append(g.slice(dist, slice(0, 1), slice(pos, pos + 1)))
    if not gold_probs:
        raise PaskitError("batch contains no gold slots")
    loss = g.scale(g.sum(g.log(g.concat(gold_probs, axis=1))), -1.0 / len(gold_probs))
    g.name_node(loss, "loss")
    return g, len(gold_probs)


def error_labels(
    distributions: dict[tuple[int, str], np.ndarray],
    gold_positions: dict[tuple[int, str], int],
) -> dict[tuple[int, str], int]:
    """q per slot: 1 iff the argmax candidate is the gold one (first-position
    tie break, matching prediction)."""
    return {
        key: int(int(np.argmax(np.asarray(dist).reshape(-1))) == gold_positions[key])
        for key, dist in distributions.items()
    }


def validator_loss_graph(
    annotated: cp.AnnotatedSentence,
    gen_store: ParameterStore,
    val_store: ParameterStore,
    gcfg: GeneratorConfig,
    vcfg: ValidatorConfig,
    vocabs: Vocabularies,
    rng: RngStream | None = None,
    train: bool = True,
) -> tuple[Graph, dict[tuple[int, str], int]]:
    """Binary cross-entropy of validator scores against the error labels,
    summed over cases and averaged over the sentence's predicates. The
    generator must be frozen; its distributions are recomputed here (dropout
    off) and the labels derive from their argmax."""
    if not gen_store.frozen:
        raise FrozenParameterError("validator training requires a frozen generator store")
    predicates = annotated.slot_predicates()
    if not predicates:
        raise PaskitError("sentence has no predicates with gold slots")
    g = Graph(rng=rng)
    sentence = annotated.sentence
    cand_set, dists = build_distributions(
        g, sentence, gen_store, gcfg, vocabs, train=False, predicates=predicates
    )
    g.evaluate()
    dist_values = {key: g.value(node) for key, node in dists.items()}
    gold_positions = {
        key: cand_set.position_of(annotated.slots[key].filler) for key in dist_values
    }
    q = error_labels(dist_values, gold_positions)

    per_predicate = []
    for pred in predicates:
        scores = build_scores(
            g, sentence, pred, cand_set, {c: dists[(pred, c)] for c in cp.CASES},
            val_store, vcfg, vocabs, train=train,
        )
        q_row = g.const([[float(q[(pred, c)]) for c in cp.CASES]])
        q_complement = g.const([[1.0 - float(q[(pred, c)]) for c in cp.CASES]])
        one_minus_scores = g.add(g.const(np.ones((1, 3))), g.scale(scores, -1.0))
        bce = g.scale(
            g.sum(
                g.add(
                    g.mul(q_row, g.log(scores)),
                    g.mul(q_complement, g.log(one_minus_scores)),
                )
            ),
            -1.0,
        )
        per_predicate.append(bce)
    loss = g.scale(g.sum(g.concat(per_predicate, axis=1)), 1.0 / len(per_predicate))
    g.name_node(loss, "loss")
    return g, q


def unsupervised_loss_graph(
    batch: list[cp.Sentence],
    gen_store: ParameterStore,
    val_store: ParameterStore,
    gcfg: GeneratorConfig,
    vcfg: ValidatorConfig,
    vocabs: Vocabularies,
    rng: RngStream | None = None,
    train: bool = True,
) -> Graph:
    """Mean of -log(validator score) over all predicates and cases of a raw
    batch. The validator must be frozen; gradients reach the generator
    through the attention coupling only."""
    if not val_store.frozen:
        raise FrozenParameterError("raw-corpus training requires a frozen validator store")
    g = Graph(rng=rng)
    score_nodes = []
    for si, sentence in enumerate(batch):
        predicates = sentence.predicates()
        if not predicates:
            raise PaskitError("raw sentence without predicates reached training")
        cand_set, dists = build_distributions(
            g, sentence, gen_store, gcfg, vocabs, train=train, tag=f"s{si}"
        )
        for pred in predicates:
            score_nodes.append(
                build_scores(
                    g, sentence, pred, cand_set, {c: dists[(pred, c)] for c in cp.CASES},
                    val_store, vcfg, vocabs, train=False,
                )
            )
    if not score_nodes:
        raise PaskitError("batch contains no predicates")
    total = g.sum(g.log(g.concat(score_nodes, axis=1)))
    loss = g.scale(total, -1.0 / (3 * len(score_nodes)))
    g.name_node(loss, "loss")
    return g


# -- train state ------------------------------------------------------------------


class _IndexStream:
    """A shuffled pass over range(n) that reshuffles when exhausted."""

    def __init__(self, n: int, shuffle_rng: RngStream):
        self.n = n
        self._rng = shuffle_rng
        self.order: list[int] = []
        self.pos = 0

    def reshuffle(self) -> None:
        self.order = [int(i) for i in self._rng.permutation(self.n)]
        self.pos = 0

    def take(self, k: int) -> list[int]:
        out: list[int] = []
        while len(out) < k:
            if self.pos >= len(self.order):
                self.reshuffle()
            out.append(self.order[self.pos])
            self.pos += 1
        return out

    def state(self) -> dict:
        return {"order": self.order, "pos": self.pos}

    def load(self, state: dict) -> None:
        self.order = [int(i) for i in state["order"]]
        self.pos = int(state["pos"])


class TrainState:
    """Everything a run needs to continue exactly: parameter stores,
    optimizer state, RNG stream positions, data stream positions, counters,
    metric history, and the best-on-dev parameter snapshot."""

    def __init__(self, gen_store, val_store, vocabs, seed: int):
        self.gen_store: ParameterStore = gen_store
        self.val_store: ParameterStore | None = val_store
        self.vocabs: Vocabularies = vocabs
        self.seed = seed
        root = RngStream(seed)
        self.shuffle_rng = root.child(2)
        self.gen_dropout_rng = root.child(3)
        self.val_dropout_rng = root.child(4)
        self.global_epoch = 0
        self.counters = {
            "raw_sentences": 0,
            "validator_sentences": 0,
            "supervised_sentences": 0,
            "pretrain_sentences": 0,
            "cycles": 0,
        }
        self.raw_stream_state: dict | None = None
        self.history: list[dict] = []
        self.best_zero_f1 = -1.0
        self.best_epoch = -1
        self.best_gen_params: dict[str, np.ndarray] | None = None

    # -- persistence ----------------------------------------------------------
    def save(self, path, extra_meta: dict | None = None) -> None:
        tensors = dict(self.gen_store.state_tensors())
        if self.val_store is not None:
            tensors.update(self.val_store.state_tensors())
        if self.best_gen_params is not None:
            for name, arr in self.best_gen_params.items():
                tensors[f"best/{name}"] = arr
        meta = {
            "precision": precision.get_precision(),
            "seed": self.seed,
            "vocabs": self.vocabs.to_meta(),
            "has_validator": self.val_store is not None,
            "gen_adam_t": self.gen_store.adam_t,
            "val_adam_t": self.val_store.adam_t if self.val_store is not None else 0,
            "global_epoch": self.global_epoch,
            "counters": self.counters,
            "rng": {
                "shuffle": self.shuffle_rng.get_state(),
                "gen_dropout": self.gen_dropout_rng.get_state(),
                "val_dropout": self.val_dropout_rng.get_state(),
            },
            "raw_stream": self.raw_stream_state,
            "history": self.history,
            "best_zero_f1": self.best_zero_f1,
            "best_epoch": self.best_epoch,
        }
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path) -> tuple["TrainState", dict]:
        tensors, meta = load_checkpoint(path)
        gen_tensors, val_tensors, best = {}, {}, {}
        for name, arr in tensors.items():
            if name.startswith("best/"):
                best[name[len("best/") :]] = arr
            elif name.startswith("val.") or "/val." in name:
                val_tensors[name] = arr
            else:
                gen_tensors[name] = arr
        gen_store = ParameterStore.from_state_tensors(gen_tensors, meta["gen_adam_t"])
        val_store = None
        if meta["has_validator"]:
            val_store = ParameterStore.from_state_tensors(val_tensors, meta["val_adam_t"])
        vocabs = Vocabularies.from_meta(meta["vocabs"])
        state = cls(gen_store, val_store, vocabs, meta["seed"])
        state.shuffle_rng.set_state(meta["rng"]["shuffle"])
        state.gen_dropout_rng.set_state(meta["rng"]["gen_dropout"])
        state.val_dropout_rng.set_state(meta["rng"]["val_dropout"])
        state.global_epoch = meta["global_epoch"]
        state.counters = dict(meta["counters"])
        state.raw_stream_state = meta["raw_stream"]
        state.history = list(meta["history"])
        state.best_zero_f1 = meta["best_zero_f1"]
        state.best_epoch = meta["best_epoch"]
        state.best_gen_params = best or None
        return state, meta


def init_train_state(
    labeled: cp.Corpus,
    gcfg: GeneratorConfig,
    vcfg: ValidatorConfig | None,
    seed: int,
    pretrained_words: np.ndarray | None = None,
    pretrained_for_validator: bool = True,
) -> TrainState:
    vocabs = build_vocabularies(labeled)
    root = RngStream(seed)
    gen_store = ParameterStore()
    init_generator_params(gen_store, gcfg, vocabs, root.child(0), pretrained_words)
    val_store = None
    if vcfg is not None:
        val_store = ParameterStore()
        val_pre = pretrained_words if pretrained_for_validator else None
        init_validator_params(val_store, vcfg, vocabs, root.child(1), val_pre)
    return TrainState(gen_store, val_store, vocabs, seed)


# -- schedule -------------------------------------------------------------------


def _batches(indices: list[int], size: int) -> list[list[int]]:
    return [indices[i : i + size] for i in range(0, len(indices), size)]


def _dev_record(state: TrainState, dev: cp.Corpus | None, gcfg, vcfg, phase: str) -> dict:
    record: dict = {"epoch": state.global_epoch, "phase": phase, "counters": dict(state.counters)}
    if dev is not None:
        predictions = evaluation.predict_corpus(dev, state.gen_store, gcfg, state.vocabs)
        report = evaluation.evaluate_predictions(dev, predictions)
        record["tasks"] = report.as_dict()
        if state.val_store is not None and vcfg is not None:
            record["val_scores"] = evaluation.monitor_validator(
                dev, state.gen_store, state.val_store, gcfg, vcfg, state.vocabs
            )
        zero_f1 = record["tasks"]["zero"]["ALL"]["F1"]
        if zero_f1 > state.best_zero_f1:
            state.best_zero_f1 = zero_f1
            state.best_epoch = state.global_epoch
            state.best_gen_params = {k: v.copy() for k, v in state.gen_store.params.items()}
    state.history.append(record)
    return record


def _supervised_step(state: TrainState, batch, gcfg, vocabs, lr, optimizer: str) -> float:
    g, n_slots = supervised_loss_graph(
        batch, state.gen_store, gcfg, vocabs, rng=state.gen_dropout_rng, train=True
    )
    g.evaluate()
    loss = g.output("loss").item()
    if state.val_store is not None:
        with frozen(state.val_store):
            grads = g.gradients("loss")
    else:
        grads = g.gradients("loss")
    if optimizer == "adam":
        adam_step(state.gen_store, grads, lr=lr)
    else:
        adagrad_step(state.gen_store, grads, lr=lr)
    return loss


def _validator_step(state: TrainState, annotated, gcfg, vcfg, lr, optimizer: str) -> float:
    with frozen(state.gen_store):
        g, _q = validator_loss_graph(
            annotated, state.gen_store, state.val_store, gcfg, vcfg, state.vocabs,
            rng=state.val_dropout_rng, train=True,
        )
        g.evaluate()
        loss = g.output("loss").item()
        grads = g.gradients("loss")
    if optimizer == "adam":
        adam_step(state.val_store, grads, lr=lr)
    else:
        adagrad_step(state.val_store, grads, lr=lr)
    return loss


def _unsupervised_step(state: TrainState, batch, gcfg, vcfg, lr) -> float:
    with frozen(state.val_store):
        g = unsupervised_loss_graph(
            batch, state.gen_store, state.val_store, gcfg, vcfg, state.vocabs,
            rng=state.gen_dropout_rng, train=True,
        )
        g.evaluate()
        loss = g.output("loss").item()
        grads = g.gradients("loss")
    adagrad_step(state.gen_store, grads, lr=lr)
    return loss


def run_supervised(
    labeled: cp.Corpus,
    dev: cp.Corpus | None,
    gcfg: GeneratorConfig,
    schedule: ScheduleConfig,
    state: TrainState,
    epochs: int,
    stop_after_epoch: int | None = None,
    step_callback=None,
) -> TrainState:
    """Generator-only training (the no-raw-corpus baseline and the
    augmented-corpus mode): Adam over shuffled minibatches."""
    trainable = [a for a in labeled.sentences if a.slot_predicates()]
    if len(trainable) < schedule.generator_batch:
        raise PaskitError(
            f"labeled corpus has {len(trainable)} usable sentences, "
            f"smaller than one minibatch of {schedule.generator_batch}"
        )
    while state.global_epoch < epochs:
        if stop_after_epoch is not None and state.global_epoch >= stop_after_epoch:
            return state
        order = [int(i) for i in state.shuffle_rng.permutation(len(trainable))]
        for batch_ids in _batches(order, schedule.generator_batch):
            batch = [trainable[i] for i in batch_ids]
            loss = _supervised_step(state, batch, gcfg, state.vocabs, schedule.adam_lr, "adam")
            state.counters["pretrain_sentences"] += len(batch)
            if step_callback:
                step_callback({"kind": "pre_gen", "phase": "A", "loss": loss})
        state.global_epoch += 1
        _dev_record(state, dev, gcfg, None, "A")
    return state


def run_schedule(
    labeled: cp.Corpus,
    raw: cp.RawCorpus,
    dev: cp.Corpus | None,
    gcfg: GeneratorConfig,
    vcfg: ValidatorConfig,
    schedule: ScheduleConfig,
    state: TrainState,
    stop_after_epoch: int | None = None,
    step_callback=None,
) -> TrainState:
    """Full adversarial schedule.

    Epoch units: pretrain_generator_epochs of supervised Adam, then
    pretrain_validator_epochs of validator Adam with the generator frozen,
    then adversarial_epochs of Adagrad cycles. Labeled data orders are
    reshuffled per epoch from the shuffle stream; the raw corpus is an
    independent stream that reshuffles whenever it runs out, keeping its
    position across epochs (and checkpoints).
    """
    if schedule.validator_batch != 1:
        raise ConfigError("validator minibatch size must be 1")
    if state.val_store is None:
        raise PaskitError("adversarial schedule requires a validator store")
    trainable = [a for a in labeled.sentences if a.slot_predicates()]
    if len(trainable) < schedule.generator_batch:
        raise PaskitError(
            f"labeled corpus has {len(trainable)} usable sentences, "
            f"smaller than one minibatch of {schedule.generator_batch}"
        )
    if len(raw.sentences) == 0:
        raise PaskitError("adversarial schedule requires a non-empty raw corpus")

    n_a = schedule.pretrain_generator_epochs
    n_b = schedule.pretrain_validator_epochs
    n_c = schedule.adversarial_epochs
    total = n_a + n_b + n_c
    cycles = schedule.resolved_cycles(len(trainable))

    raw_stream = _IndexStream(len(raw.sentences), state.shuffle_rng)
    if state.raw_stream_state is not None:
        raw_stream.load(state.raw_stream_state)

    while state.global_epoch < total:
        if stop_after_epoch is not None and state.global_epoch >= stop_after_epoch:
            state.raw_stream_state = raw_stream.state()
            return state
        epoch = state.global_epoch
        if epoch < n_a:
            phase = "A"
            order = [int(i) for i in state.shuffle_rng.permutation(len(trainable))]
            for batch_ids in _batches(order, schedule.generator_batch):
                batch = [trainable[i] for i in batch_ids]
                loss = _supervised_step(state, batch, gcfg, state.vocabs, schedule.adam_lr, "adam")
                state.counters["pretrain_sentences"] += len(batch)
                if step_callback:
                    step_callback({"kind": "pre_gen", "phase": phase, "loss": loss})
        elif epoch < n_a + n_b:
            phase = "B"
            order = [int(i) for i in state.shuffle_rng.permutation(len(trainable))]
            for i in order:
                loss = _validator_step(state, trainable[i], gcfg, vcfg, schedule.adam_lr, "adam")
                if step_callback:
                    step_callback({"kind": "pre_val", "phase": phase, "loss": loss})
        else:
            phase = "C"
            sup_stream = _IndexStream(len(trainable), state.shuffle_rng)
            sup_stream.reshuffle()
            val_stream = _IndexStream(len(trainable), state.shuffle_rng)
            val_stream.reshuffle()
            for _ in range(cycles):
                raw_ids = raw_stream.take(schedule.generator_batch)
                loss = _unsupervised_step(
                    state, [raw.sentences[i] for i in raw_ids], gcfg, vcfg, schedule.adagrad_lr
                )
                state.counters["raw_sentences"] += len(raw_ids)
                if step_callback:
                    step_callback({"kind": "ul_gen", "phase": phase, "loss": loss})
                for _k in range(schedule.validator_steps):
                    (idx,) = val_stream.take(1)
                    loss = _validator_step(
                        state, trainable[idx], gcfg, vcfg, schedule.adagrad_lr, "adagrad"
                    )
                    state.counters["validator_sentences"] += 1
                    if step_callback:
                        step_callback({"kind": "val", "phase": phase, "loss": loss})
                for _l in range(schedule.supervised_steps):
                    batch_ids = sup_stream.take(schedule.generator_batch)
                    loss = _supervised_step(
                        state, [trainable[i] for i in batch_ids], gcfg, state.vocabs,
                        schedule.adagrad_lr, "adagrad",
                    )
                    state.counters["supervised_sentences"] += len(batch_ids)
                    if step_callback:
                        step_callback({"kind": "sup_gen", "phase": phase, "loss": loss})
                state.counters["cycles"] += 1
        state.global_epoch += 1
        _dev_record(state, dev, gcfg, vcfg, phase)
        state.raw_stream_state = raw_stream.state()
    return state
