"""Python bindings for the rankft ranking-finetuning toolkit."""

from ._core import (
    Error,
    ParseError,
    PolicyModel,
    ValidationError,
    build_judge_prompt,
    eval_rouge,
    length_penalized_score,
    make_toy_instructions,
    parse_judge_output,
    preset_names,
    rank_loss,
    rank_loss_gradient,
    read_manifest,
    rouge_l,
    run_preset,
    run_recipe,
    sample_diverse,
)

__all__ = [
    "Error",
    "ParseError",
    "PolicyModel",
    "ValidationError",
    "build_judge_prompt",
    "eval_rouge",
    "length_penalized_score",
    "make_toy_instructions",
    "parse_judge_output",
    "preset_names",
    "rank_loss",
    "rank_loss_gradient",
    "read_manifest",
    "rouge_l",
    "run_preset",
    "run_recipe",
    "sample_diverse",
]
