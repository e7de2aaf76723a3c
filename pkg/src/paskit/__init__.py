"""Semi-supervised adversarial training for Japanese predicate-argument
structure analysis: a head-selection generator, an attention-coupled
validator, training/evaluation pipelines, a data-augmentation baseline and
a synthetic-corpus harness."""

__version__ = "0.1.0"
