"""Domain-adaptive pre-training toolkit: Python bindings to the C++ core."""

from ._dapt import (
    Document,
    Tokenizer,
    IoError,
    NumericalError,
    ValidationError,
    cbtfidf_scores,
    classification_metrics,
    is_nfc_category,
    load_corpus,
    nested_subsets,
    predict_top_k,
    run_cli,
    split_corpus,
)

__all__ = [
    "Document",
    "Tokenizer",
    "IoError",
    "NumericalError",
    "ValidationError",
    "cbtfidf_scores",
    "classification_metrics",
    "is_nfc_category",
    "load_corpus",
    "nested_subsets",
    "predict_top_k",
    "run_cli",
    "split_corpus",
]


def main() -> int:
    import sys

    return run_cli(sys.argv[1:])
