"""KHAN political-stance classifier."""

from ._khan import (
    Classifier,
    PlateauScheduler,
    UserError,
    evaluate_completion,
    fit,
    gen_synthetic,
    load_articles,
    make_folds,
    mean_and_stddev,
    split_sentences,
    welch_t_test,
)

__all__ = [
    "Classifier",
    "PlateauScheduler",
    "UserError",
    "evaluate_completion",
    "fit",
    "gen_synthetic",
    "load_articles",
    "make_folds",
    "mean_and_stddev",
    "split_sentences",
    "welch_t_test",
]
