"""Small hyperparameter grid search over held-out weighted F1."""

from __future__ import annotations

from typing import Sequence

from ..ingest import FeatureMatrix
from .gbm import GbmHyperParams, GbmModel, train_gbm
from .metrics import evaluate_classifier


def grid_search(
    train: FeatureMatrix,
    validation: FeatureMatrix,
    grid: Sequence[GbmHyperParams],
) -> tuple[GbmModel, list[tuple[GbmHyperParams, float]]]:
    """Train one classifier per setting and keep the best validation
    weighted F1 (ties keep the earlier grid entry).

    Returns the winning model and the full (hyperparams, weighted F1)
    table in grid order.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    results: list[tuple[GbmHyperParams, float]] = []
    best_model: GbmModel | None = None
    best_score = -1.0
    for hp in grid:
        model = train_gbm(train, hp)
        score = evaluate_classifier(model, validation).weighted_f1
        results.append((hp, score))
        if score > best_score:
            best_model, best_score = model, score
    return best_model, results
