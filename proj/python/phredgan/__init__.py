"""Persona-conditioned adversarial dialogue model, desk scale."""

from ._core import (
    bleu4,
    classify_persona,
    distinct_n,
    evaluate,
    generate,
    generate_replies,
    noise_search,
    rouge2_f1,
    synth,
    tokenize,
    train,
)

__all__ = [
    "bleu4",
    "classify_persona",
    "distinct_n",
    "evaluate",
    "generate",
    "generate_replies",
    "noise_search",
    "rouge2_f1",
    "synth",
    "tokenize",
    "train",
]
