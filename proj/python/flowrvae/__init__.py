# SPDX-License-Identifier: Apache-2.0
"""Botnet detection from NetFlow records with a recurrent variational autoencoder."""

from ._core import (
    DataError,
    FitError,
    NumericError,
    __version__,
    anomaly_score,
    best_fit,
    detect,
    evaluate,
    fit_detector,
    fit_family,
    kfold_split,
    pdf,
    pr_auc,
    preprocess,
    prf,
    roc_auc,
    run_experiment,
    score,
    stream,
    synth,
    train,
)

__all__ = [
    "DataError",
    "FitError",
    "NumericError",
    "__version__",
    "anomaly_score",
    "best_fit",
    "detect",
    "evaluate",
    "fit_detector",
    "fit_family",
    "kfold_split",
    "pdf",
    "pr_auc",
    "preprocess",
    "prf",
    "roc_auc",
    "run_experiment",
    "score",
    "stream",
    "synth",
    "train",
]
