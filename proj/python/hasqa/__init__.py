"""Hashed answer selection: binary answer codes ranked by question attention."""

from ._core import (
    CapacityError,
    CodeStore,
    Dataset,
    Error,
    FormatError,
    IndexError,
    InputError,
    Model,
    NumericError,
    ParseError,
    TrainConfig,
    UsageError,
    Vocabulary,
    evaluate,
    grad_check,
    hard_binarize,
    memory_report,
    pack_bits,
    rank,
    soft_binarize,
    synthetic_jsonl,
    train,
    unpack_bits,
)

__all__ = [
    "CapacityError",
    "CodeStore",
    "Dataset",
    "Error",
    "FormatError",
    "IndexError",
    "InputError",
    "Model",
    "NumericError",
    "ParseError",
    "TrainConfig",
    "UsageError",
    "Vocabulary",
    "evaluate",
    "grad_check",
    "hard_binarize",
    "memory_report",
    "pack_bits",
    "rank",
    "soft_binarize",
    "synthetic_jsonl",
    "train",
    "unpack_bits",
]
