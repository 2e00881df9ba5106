"""Selectivity curve: patch accuracy among the most confident predictions.

Every patch prediction is scored by its maximum softmax probability. For
each response rate q in {0.1, ..., 1.0}, the curve reports accuracy over
the top-q fraction of patches ranked by that confidence, so q = 1.0 equals
the overall patch accuracy by definition.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .evaluate import collect_predictions
from .data import RecordDataset
from .model import CropDetector

__all__ = ["selectivity_curve", "curve_from_predictions"]

RESPONSE_RATES = tuple((q + 1) / 10 for q in range(10))


def curve_from_predictions(conf: np.ndarray, correct: np.ndarray) -> list[dict]:
    """(response_rate, accuracy, n_kept) triples from flat confidence/hit arrays."""
    if conf.shape != correct.shape or conf.ndim != 1:
        raise ValueError("confidence and correctness must be flat arrays of equal length")
    n = len(conf)
    if n == 0:
        raise ValueError("no patch predictions to rank")
    # stable order: descending confidence, ties broken by original index
    order = np.lexsort((np.arange(n), -conf))
    ranked = correct[order]
    points = []
    for q in RESPONSE_RATES:
        kept = max(1, int(round(q * n)))
        points.append(
            {
                "response_rate": q,
                "accuracy": float(ranked[:kept].mean()),
                "n_kept": kept,
            }
        )
    return points


def selectivity_curve(
    model: CropDetector,
    dataset_dir: str | Path,
    split: str | None = "val",
) -> list[dict]:
    """Rank all patch predictions of a split by confidence; accuracy per decile."""
    if model.config.variant == "global":
        raise ValueError("selectivity requires a patch branch; variant is 'global'")
    dataset = RecordDataset(dataset_dir, split=split, augment=False)
    arrays = collect_predictions(model, dataset)
    conf = arrays["patch_conf"].reshape(-1)
    correct = (arrays["patch_pred"] == arrays["patch_labels"]).reshape(-1).astype(np.float64)
    return curve_from_predictions(conf, correct)
