"""Run configuration: defaults, key=value files, overrides, echo.

One flat RunConfig covers every subcommand. Values load in order
defaults -> config file -> --set overrides -> explicit flags, so flags win.
The fully resolved configuration is echoed next to the outputs and can be
fed back via --config to reproduce a run bit-exactly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .augment import SwapPolicy
from .errors import ConfigError
from .generator import GeneratorConfig
from .synthcorpus import SynthConfig
from .training import ScheduleConfig
from .validator import ValidatorConfig


@dataclass
class RunConfig:
    # run
    seed: int = 0
    precision: str = "f32"
    mode: str = "gen+adv"  # gen | gen+aug | gen+adv
    labeled_path: str = ""
    raw_path: str = ""
    dev_path: str = ""
    embeddings_path: str = ""
    # generator (network structure defaults)
    word_dim: int = 100
    pos_dim: int = 10
    dpos_dim: int = 10
    infl_dim: int = 9
    lstm_hidden: int = 256
    lstm_layers: int = 3
    path_hidden: int = 256
    fnn_hidden: int = 1000
    gen_dropout: float = 0.5
    # validator
    val_word_dim: int = 100
    val_fnn_hidden: int = 1000
    val_dropout: float = 0.5
    val_pretrained: bool = True
    # schedule
    pretrain_generator_epochs: int = 2
    pretrain_validator_epochs: int = 1
    validator_steps: int = 16  # k
    supervised_steps: int = 4  # l
    generator_batch: int = 16
    validator_batch: int = 1
    adam_lr: float = 1e-3
    adagrad_lr: float = 1e-2
    adversarial_epochs: int = 20
    cycles_per_epoch: int = 0
    supervised_epochs: int = 20  # gen / gen+aug modes
    # augmentation
    swap_exponent: int = 10
    neighbor_count: int = 20
    pseudo_multiplier: float = 1.0
    # synthetic corpus
    synth_predicates: int = 12
    synth_nouns: int = 24
    synth_classes: int = 6
    synth_purity: float = 0.9
    synth_min_len: int = 4
    synth_max_len: int = 14
    synth_two_clause_rate: float = 0.6
    synth_distractor_rate: float = 0.7
    synth_distractor_offclass: float = 0.8
    synth_misleading_topic_rate: float = 0.25
    synth_rate_overt: float = 0.15
    synth_rate_case: float = 0.35
    synth_rate_zero: float = 0.25
    synth_rate_exo: float = 0.10
    synth_rate_null: float = 0.15
    synth_labeled: int = 200
    synth_raw: int = 2000
    synth_dev: int = 200
    synth_test: int = 500
    synth_embedding_dim: int = 16
    synth_embedding_noise: float = 0.35

    # -- views -----------------------------------------------------------
    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            word_dim=self.word_dim,
            pos_dim=self.pos_dim,
            dpos_dim=self.dpos_dim,
            infl_dim=self.infl_dim,
            lstm_hidden=self.lstm_hidden,
            lstm_layers=self.lstm_layers,
            path_hidden=self.path_hidden,
            fnn_hidden=self.fnn_hidden,
            dropout=self.gen_dropout,
        )

    def validator_config(self) -> ValidatorConfig:
        return ValidatorConfig(
            word_dim=self.val_word_dim,
            fnn_hidden=self.val_fnn_hidden,
            dropout=self.val_dropout,
        )

    def schedule_config(self) -> ScheduleConfig:
        return ScheduleConfig(
            pretrain_generator_epochs=self.pretrain_generator_epochs,
            pretrain_validator_epochs=self.pretrain_validator_epochs,
            validator_steps=self.validator_steps,
            supervised_steps=self.supervised_steps,
            generator_batch=self.generator_batch,
            validator_batch=self.validator_batch,
            adam_lr=self.adam_lr,
            adagrad_lr=self.adagrad_lr,
            adversarial_epochs=self.adversarial_epochs,
            cycles_per_epoch=self.cycles_per_epoch,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            predicates=self.synth_predicates,
            nouns=self.synth_nouns,
            classes=self.synth_classes,
            purity=self.synth_purity,
            min_len=self.synth_min_len,
            max_len=self.synth_max_len,
            two_clause_rate=self.synth_two_clause_rate,
            distractor_rate=self.synth_distractor_rate,
            distractor_offclass=self.synth_distractor_offclass,
            misleading_topic_rate=self.synth_misleading_topic_rate,
            rate_overt=self.synth_rate_overt,
            rate_case=self.synth_rate_case,
            rate_zero=self.synth_rate_zero,
            rate_exo=self.synth_rate_exo,
            rate_null=self.synth_rate_null,
            labeled_count=self.synth_labeled,
            raw_count=self.synth_raw,
            dev_count=self.synth_dev,
            test_count=self.synth_test,
            embedding_dim=self.synth_embedding_dim,
            embedding_noise=self.synth_embedding_noise,
            seed=self.seed,
        )

    def swap_policy(self) -> SwapPolicy:
        return SwapPolicy(
            exponent=self.swap_exponent,
            neighbor_count=self.neighbor_count,
            size_multiplier=self.pseudo_multiplier,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key: str, text: str):
    kind = _FIELDS[key].type
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            lowered = text.strip().lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value {text!r} for config key {key!r} (expected {kind})") from None


def apply_overrides(cfg: RunConfig, pairs: dict[str, str]) -> RunConfig:
    for key, value in pairs.items():
        if key not in _FIELDS:
            raise ConfigError(
                f"unknown config key {key!r}; valid keys: {', '.join(sorted(_FIELDS))}"
            )
        setattr(cfg, key, _convert(key, value))
    return cfg


def parse_config_file(path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {line_no}: expected key=value")
            key, _, value = stripped.partition("=")
            pairs[key.strip()] = value.strip()
    return pairs


def parse_set_args(items: list[str]) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        pairs[key.strip()] = value.strip()
    return pairs


def format_config(cfg: RunConfig) -> str:
    lines = [f"{name}={getattr(cfg, name)}" for name in sorted(_FIELDS)]
    return "\n".join(lines) + "\n"


def write_config_echo(cfg: RunConfig, out_dir) -> None:
    Path(out_dir).joinpath("resolved.cfg").write_text(format_config(cfg), encoding="utf-8")
