"""Command-line entry point.

Subcommands: synth, train, evaluate, predict, augment. Every run writes the
fully resolved configuration next to its outputs; re-running from that file
with the same inputs reproduces the outputs bit-exactly in a fixed
precision mode. Errors exit nonzero with a single "error: ..." line on
stderr.
"""

from __future__ import annotations

import os

# single-threaded BLAS: the matrices here are small and reductions must be
# deterministic across runs
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import json
import sys
import time
from pathlib import Path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paskit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a single config key")
        p.add_argument("--seed", type=int, help="root random seed")
        p.add_argument("--precision", choices=("f32", "f64"))
        p.add_argument("--out-dir", dest="out_dir", help="output directory")

    p = sub.add_parser("synth", help="generate synthetic corpora")
    common(p)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--mode", choices=("gen", "gen+aug", "gen+adv"))
    p.add_argument("--labeled", help="annotated training corpus")
    p.add_argument("--raw", help="raw corpus (gen+adv)")
    p.add_argument("--dev", help="annotated development corpus")
    p.add_argument("--embeddings", help="pre-trained word vectors (text format)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--stop-after-epoch", dest="stop_after_epoch", type=int,
                   help="pause after this many epoch units (checkpoint is written)")

    p = sub.add_parser("evaluate", help="score a checkpoint on an annotated corpus")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)

    p = sub.add_parser("predict", help="predict slots for a raw-format file")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="predictions output file")

    p = sub.add_parser("augment", help="build a pseudo corpus by word swapping")
    common(p)
    p.add_argument("--labeled", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True, help="pseudo corpus output file")
    return parser


def _resolve_config(args):
    from .config import RunConfig, apply_overrides, parse_config_file, parse_set_args

    cfg = RunConfig()
    if args.config:
        apply_overrides(cfg, parse_config_file(args.config))
    apply_overrides(cfg, parse_set_args(args.overrides))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.precision is not None:
        cfg.precision = args.precision
    for flag, key in (
        ("mode", "mode"),
        ("labeled", "labeled_path"),
        ("raw", "raw_path"),
        ("dev", "dev_path"),
        ("embeddings", "embeddings_path"),
    ):
        value = getattr(args, flag, None)
        if value:
            setattr(cfg, key, value)
    return cfg


def _need_out_dir(args) -> Path:
    from .errors import ConfigError

    if not args.out_dir:
        raise ConfigError("--out-dir is required")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_model_checkpoint(path):
    """Inference view of a checkpoint: generator params + vocabularies + config."""
    from .checkpoint import load_checkpoint
    from .config import RunConfig, apply_overrides
    from .embeddings import Vocabularies
    from .errors import FormatError
    from .optim import ParameterStore

    tensors, meta = load_checkpoint(path)
    if "vocabs" not in meta or "config" not in meta:
        raise FormatError(f"{path}: checkpoint lacks model metadata")
    params = {k: v for k, v in tensors.items() if k.startswith("best/")}
    if params:
        params = {k[len("best/") :]: v for k, v in params.items()}
    else:
        params = {k: v for k, v in tensors.items() if k.startswith("gen.")}
    store = ParameterStore()
    for name, arr in params.items():
        store.add(name, arr)
    vocabs = Vocabularies.from_meta(meta["vocabs"])
    cfg = apply_overrides(RunConfig(), {k: str(v) for k, v in meta["config"].items()})
    return store, vocabs, cfg, meta


def _check_dimensions(store, gcfg):
    from .errors import ConfigError

    w1 = store.params.get("gen.fnn.NOM.W1")
    if w1 is None:
        raise ConfigError("checkpoint has no generator scorer parameters")
    if w1.shape != (gcfg.scorer_input_dim, gcfg.fnn_hidden):
        raise ConfigError(
            f"checkpoint dimensions {w1.shape} do not match the configured "
            f"network ({gcfg.scorer_input_dim}, {gcfg.fnn_hidden})"
        )


def _load_training_corpora(cfg):
    from . import corpus as cp
    from .errors import ConfigError

    if not cfg.labeled_path:
        raise ConfigError("a labeled corpus is required (--labeled)")
    labeled, _ = cp.preprocess(cp.parse_annotated(cfg.labeled_path))
    dev = None
    if cfg.dev_path:
        dev, _ = cp.preprocess(cp.parse_annotated(cfg.dev_path))
        dev = cp.map_exophora_expressions(dev)
    raw = None
    if cfg.mode == "gen+adv":
        if not cfg.raw_path:
            raise ConfigError("--mode gen+adv requires a raw corpus (--raw)")
        raw = cp.parse_raw(cfg.raw_path)
    return labeled, raw, dev


def _embedding_matrix(cfg, labeled):
    """Returns (matrix or None, coverage or None, table or None)."""
    from .embeddings import build_vocabularies, load_embeddings
    from .rng import RngStream

    if not cfg.embeddings_path:
        return None, None, None
    vocabs = build_vocabularies(labeled)
    table = load_embeddings(
        cfg.embeddings_path, vocabs.word, cfg.word_dim, RngStream(cfg.seed, (5,))
    )
    return table.matrix, table.coverage, table


def cmd_synth(args) -> int:
    from . import corpus as cp
    from . import synthcorpus
    from .config import write_config_echo

    cfg = _resolve_config(args)
    out = _need_out_dir(args)
    result = synthcorpus.generate(cfg.synth_config())
    cp.write_annotated(result.labeled, out / "labeled.tsv")
    cp.write_raw(result.raw, out / "raw.tsv")
    cp.write_annotated(result.dev, out / "dev.tsv")
    cp.write_annotated(result.test, out / "test.tsv")
    (out / "embeddings.txt").write_text(synthcorpus.embedding_lines(result.embeddings))
    write_config_echo(cfg, out)
    (out / "report.json").write_text(json.dumps(result.report, sort_keys=True) + "\n")
    print(f"synth: wrote {result.report} to {out}")
    return 0


def cmd_train(args) -> int:
    from . import evaluation, precision, training
    from .augment import build_neighbors, generate_pseudo_corpus
    from .config import write_config_echo
    from .corpus import Corpus
    from .embeddings import EmbeddingTable, build_vocabularies
    from .errors import ConfigError
    from .layers import embedding_init
    from .rng import RngStream

    cfg = _resolve_config(args)
    if cfg.mode not in ("gen", "gen+aug", "gen+adv"):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    out = _need_out_dir(args)
    precision.set_precision(cfg.precision)
    started = time.time()

    labeled, raw, dev = _load_training_corpora(cfg)
    gcfg = cfg.generator_config()
    vcfg = cfg.validator_config() if cfg.mode == "gen+adv" else None
    schedule = cfg.schedule_config()
    pretrained, coverage, table = _embedding_matrix(cfg, labeled)

    if args.resume:
        state, _meta = training.TrainState.load(args.resume)
    else:
        state = training.init_train_state(
            labeled, gcfg, vcfg, cfg.seed,
            pretrained_words=pretrained,
            pretrained_for_validator=cfg.val_pretrained,
        )

    train_corpus = labeled
    if cfg.mode == "gen+aug":
        if table is None:
            vocabs = build_vocabularies(labeled)
            table = EmbeddingTable(
                vocabs.word,
                embedding_init(RngStream(cfg.seed, (5,)), len(vocabs.word), cfg.word_dim),
            )
        neighbors = build_neighbors(table, cfg.neighbor_count)
        pseudo, aug_report = generate_pseudo_corpus(
            labeled, neighbors, cfg.swap_policy(), cfg.seed
        )
        train_corpus = Corpus(labeled.sentences + pseudo.sentences)
        print(f"train: merged {aug_report.generated} pseudo sentences")

    if cfg.mode == "gen+adv":
        state = training.run_schedule(
            train_corpus, raw, dev, gcfg, vcfg, schedule, state,
            stop_after_epoch=args.stop_after_epoch,
        )
    else:
        state = training.run_supervised(
            train_corpus, dev, gcfg, schedule, state, cfg.supervised_epochs,
            stop_after_epoch=args.stop_after_epoch,
        )

    config_meta = {"config": {k: getattr(cfg, k) for k in vars(cfg)}}
    state.save(out / "last.ckpt", extra_meta=config_meta)
    _write_best_checkpoint(state, out / "best.ckpt", config_meta)
    (out / "metrics.csv").write_text(
        "\n".join(evaluation.metrics_csv_lines(state.history)) + "\n"
    )
    (out / "metrics.jsonl").write_text(
        "\n".join(evaluation.metrics_jsonl_lines(state.history)) + "\n"
    )
    write_config_echo(cfg, out)
    report = {
        "mode": cfg.mode,
        "epochs": state.global_epoch,
        "counters": state.counters,
        "best_epoch": state.best_epoch,
        "best_zero_f1": state.best_zero_f1,
        "embedding_coverage": coverage,
    }
    (out / "report.json").write_text(json.dumps(report, sort_keys=True) + "\n")
    print(
        f"train: mode={cfg.mode} epochs={state.global_epoch} "
        f"best_zero_f1={state.best_zero_f1:.4f} ({time.time() - started:.1f}s)"
    )
    return 0


def _write_best_checkpoint(state, path, config_meta) -> None:
    from . import precision
    from .checkpoint import save_checkpoint

    params = state.best_gen_params or state.gen_store.params
    meta = {
        "precision": precision.get_precision(),
        "vocabs": state.vocabs.to_meta(),
        "best_epoch": state.best_epoch,
        "best_zero_f1": state.best_zero_f1,
    }
    meta.update(config_meta)
    save_checkpoint(path, dict(params), meta)


def cmd_evaluate(args) -> int:
    from . import corpus as cp
    from . import evaluation, precision

    out = _need_out_dir(args)
    store, vocabs, cfg, meta = _load_model_checkpoint(args.checkpoint)
    if args.overrides or args.config:
        override_cfg = _resolve_config(args)
        if override_cfg.generator_config() != cfg.generator_config():
            cfg = override_cfg
    precision.set_precision(meta.get("precision", cfg.precision))
    gcfg = cfg.generator_config()
    _check_dimensions(store, gcfg)

    corpus, _ = cp.preprocess(cp.parse_annotated(args.corpus))
    corpus = cp.map_exophora_expressions(corpus)
    predictions = evaluation.predict_corpus(corpus, store, gcfg, vocabs)
    report = evaluation.evaluate_predictions(corpus, predictions)
    record = {
        "epoch": meta.get("best_epoch", 0),
        "phase": "eval",
        "tasks": report.as_dict(),
    }
    (out / "eval.csv").write_text("\n".join(evaluation.metrics_csv_lines([record])) + "\n")
    (out / "eval.json").write_text(json.dumps(record, sort_keys=True) + "\n")
    case_f1 = report.f1("case")
    zero_f1 = report.f1("zero")
    print(f"evaluate: case_f1={case_f1:.4f} zero_f1={zero_f1:.4f}")
    return 0


def cmd_predict(args) -> int:
    from . import corpus as cp
    from . import precision
    from .generator import predict as predict_sentence

    store, vocabs, cfg, meta = _load_model_checkpoint(args.checkpoint)
    precision.set_precision(meta.get("precision", cfg.precision))
    gcfg = cfg.generator_config()
    _check_dimensions(store, gcfg)
    raw = cp.parse_raw(args.input)
    lines = []
    for si, sentence in enumerate(raw.sentences):
        results = predict_sentence(sentence, store, gcfg, vocabs)
        for pred in sentence.predicates():
            row = [str(si), str(pred)]
            for case in cp.CASES:
                filler = results[(pred, case)]
                row.append(
                    {"author": "A", "reader": "R", "null": "N"}.get(
                        filler.kind, str(filler.index)
                    )
                )
            lines.append("\t".join(row))
    Path(args.out).write_text("\n".join(lines) + ("\n" if lines else ""))
    print(f"predict: wrote {len(lines)} predicate rows to {args.out}")
    return 0


def cmd_augment(args) -> int:
    from . import corpus as cp
    from .augment import build_neighbors, generate_pseudo_corpus
    from .config import write_config_echo
    from .embeddings import EmbeddingTable, build_vocabularies, load_embeddings
    from .layers import embedding_init
    from .rng import RngStream

    cfg = _resolve_config(args)
    labeled, _ = cp.preprocess(cp.parse_annotated(args.labeled))
    vocabs = build_vocabularies(labeled)
    if cfg.embeddings_path:
        table = load_embeddings(
            cfg.embeddings_path, vocabs.word, cfg.word_dim, RngStream(cfg.seed, (5,))
        )
    else:
        table = EmbeddingTable(
            vocabs.word,
            embedding_init(RngStream(cfg.seed, (5,)), len(vocabs.word), cfg.word_dim),
        )
    neighbors = build_neighbors(table, cfg.neighbor_count)
    pseudo, report = generate_pseudo_corpus(labeled, neighbors, cfg.swap_policy(), cfg.seed)
    cp.write_annotated(pseudo, args.out)
    if args.out_dir:
        write_config_echo(cfg, _need_out_dir(args))
    print(
        f"augment: wrote {report.generated} sentences "
        f"({report.swapped} swapped, {report.copied_no_arguments} without arguments)"
    )
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "augment": cmd_augment,
}


def main(argv=None) -> int:
    from .errors import PaskitError

    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PaskitError as exc:
        print(f"error: {str(exc) or exc.__class__.__name__}".replace("\n", " "), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
