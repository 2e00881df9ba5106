"""Metrics over a dataset split: crop accuracy, patch accuracy, rect error.

``collect_predictions`` runs the model over records and returns plain arrays;
``metrics_from_predictions`` turns arrays into metrics. Keeping the two
separate lets tests feed oracle predictions straight into the metric code.
"""

from __future__ import annotations

import logging
import warnings
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .data import RecordDataset, record_loader
from .model import CropDetector

__all__ = ["collect_predictions", "metrics_from_predictions", "evaluate"]

log = logging.getLogger("cropharness")

IMBALANCE_WARN_FRACTION = 0.2

CROP_CHANCE = 0.5
PATCH_CHANCE = 1.0 / 16.0


def collect_predictions(
    model: CropDetector,
    dataset: RecordDataset,
    batch_size: int = 16,
) -> dict:
    """Forward the whole dataset; returns numpy arrays of predictions and truths.

    Keys: crop_prob (N,), cropped (N,), rect_hat (N, 4), rect (N, 4),
    size_factor (N,), and - when the model has a patch branch - patch_pred
    (N, 16), patch_conf (N, 16) max-softmax confidence, patch_labels (N, 16).
    """
    model.eval()
    config = model.config
    loader_cfg = ModelConfig(
        variant=config.variant,
        embed_dim=config.embed_dim,
        base_width=config.base_width,
        fusion_hidden=config.fusion_hidden,
        batch_size=batch_size,
        seed=config.seed,
        augment=False,
    )
    loader = record_loader(dataset, loader_cfg, epoch=0, shuffle=False)
    out: dict[str, list] = {k: [] for k in (
        "crop_prob", "cropped", "rect_hat", "rect", "size_factor",
        "patch_pred", "patch_conf", "patch_labels", "record_id",
    )}
    with torch.no_grad():
        for batch in loader:
            pred = model(
                patches=batch["patches"] if config.variant != "global" else None,
                thumbs=batch["thumb"] if config.variant != "patch" else None,
            )
            out["crop_prob"].append(pred.crop_prob.numpy())
            out["cropped"].append(batch["cropped"].numpy())
            out["rect_hat"].append(pred.rect_hat.numpy())
            out["rect"].append(batch["rect"].numpy())
            out["size_factor"].append(batch["size_factor"].numpy())
            out["record_id"].append(batch["record_id"].numpy())
            if pred.patch_logits is not None:
                probs = torch.softmax(pred.patch_logits, dim=2)
                conf, arg = probs.max(dim=2)
                out["patch_pred"].append(arg.numpy())
                out["patch_conf"].append(conf.numpy())
                out["patch_labels"].append(batch["labels"].numpy())
    arrays = {
        key: np.concatenate(chunks) if chunks else None for key, chunks in out.items()
    }
    return arrays


def metrics_from_predictions(arrays: dict) -> dict:
    """Accuracy and error metrics from prediction arrays.

    Crop predictions threshold crop_prob at 0.5. Patch accuracy is over all
    patches of all samples. Rect error is the mean absolute difference over
    the four coordinates and all samples. Warns (metrics still returned)
    when the evaluation set is class-imbalanced.
    """
    cropped = arrays["cropped"].astype(bool)
    n = len(cropped)
    n_cropped = int(cropped.sum())
    minority = min(n_cropped, n - n_cropped)
    if n == 0:
        raise ValueError("no samples to evaluate")
    if minority / n < IMBALANCE_WARN_FRACTION:
        warnings.warn(
            f"evaluation set is class-imbalanced ({n_cropped}/{n} cropped); "
            "crop accuracy is unreliable",
            stacklevel=2,
        )
    crop_pred = arrays["crop_prob"] > 0.5
    metrics = {
        "n_samples": n,
        "n_cropped": n_cropped,
        "crop_accuracy": float((crop_pred == cropped).mean()),
        "rect_mae": float(np.abs(arrays["rect_hat"] - arrays["rect"]).mean()),
        "crop_chance": CROP_CHANCE,
        "patch_chance": PATCH_CHANCE,
    }
    if arrays.get("patch_pred") is not None:
        metrics["patch_accuracy"] = float(
            (arrays["patch_pred"] == arrays["patch_labels"]).mean()
        )
    else:
        metrics["patch_accuracy"] = None
    return metrics


def evaluate(
    model: CropDetector,
    dataset_dir: str | Path,
    split: str | None = "val",
    record_ids: list[int] | None = None,
) -> dict:
    """Run the model over a split and compute metrics."""
    dataset = RecordDataset(dataset_dir, split=split, augment=False, record_ids=record_ids)
    arrays = collect_predictions(model, dataset)
    metrics = metrics_from_predictions(arrays)
    metrics["split"] = split
    metrics["variant"] = model.config.variant
    return metrics
