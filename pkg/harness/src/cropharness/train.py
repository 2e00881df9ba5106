"""Training loops: joint records mode and pretext-batches mode.

Optimization uses Adam with a per-epoch geometric learning-rate decay from
``lr_start`` (epoch 0) to ``lr_end`` (final epoch). Metrics are logged per
epoch to ``metrics.json`` and the model is checkpointed to ``checkpoint.pt``.
A non-finite loss aborts training, leaving the last finite checkpoint on
disk and raising TrainingDiverged.
"""

from __future__ import annotations

import copy
import json
import logging
from pathlib import Path

import torch
from torch import nn

from .config import ModelConfig, learning_rate
from .data import (
    DataError,
    PretextBatchDataset,
    RecordDataset,
    pretext_loader,
    record_loader,
)
from .loss import NonFiniteLossError, compute_loss
from .model import CropDetector, build_model

__all__ = ["TrainingDiverged", "train_records", "train_pretext", "load_checkpoint"]

log = logging.getLogger("cropharness")

CHECKPOINT_NAME = "checkpoint.pt"
METRICS_NAME = "metrics.json"


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the last finite checkpoint was kept."""

    def __init__(self, message: str, checkpoint_path: Path) -> None:
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


def _save_checkpoint(
    path: Path, model_state: dict, config: ModelConfig, mode: str, epochs_run: int
) -> None:
    torch.save(
        {
            "model_state": model_state,
            "config": config.to_dict(),
            "mode": mode,
            "epochs_run": epochs_run,
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[CropDetector, dict]:
    """Rebuild the model from a checkpoint; returns (model, checkpoint dict).

    Raises DataError for files that are not readable model checkpoints.
    """
    try:
        ckpt = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch surfaces pickle/zip/runtime errors here
        raise DataError(f"cannot load checkpoint {path}: {exc}") from exc
    try:
        config = ModelConfig.from_dict(ckpt["config"])
        model = build_model(config)
        model.load_state_dict(ckpt["model_state"])
    except (KeyError, TypeError, ValueError, RuntimeError) as exc:
        raise DataError(f"{path} is not a model checkpoint: {exc}") from exc
    model.eval()
    return model, ckpt


def _write_metrics(out_dir: Path, mode: str, config: ModelConfig, epochs: list[dict]) -> None:
    payload = {"mode": mode, "config": config.to_dict(), "epochs": epochs}
    (out_dir / METRICS_NAME).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _finite_state(model: nn.Module) -> dict:
    return copy.deepcopy(model.state_dict())


def train_records(
    dataset_dir: str | Path,
    out_dir: str | Path,
    config: ModelConfig,
    split: str | None = "train",
    max_steps_per_epoch: int | None = None,
    record_ids: list[int] | None = None,
) -> dict:
    """Train on full records (patches + thumbnail + all three loss terms).

    Returns the metrics document; writes checkpoint.pt and metrics.json to
    ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    model = build_model(config)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_start)
    dataset = RecordDataset(
        dataset_dir, split=split, augment=config.augment, seed=config.seed,
        record_ids=record_ids,
    )
    ckpt_path = out_dir / CHECKPOINT_NAME
    last_finite = _finite_state(model)
    _save_checkpoint(ckpt_path, last_finite, config, "records", 0)
    epochs: list[dict] = []
    for epoch in range(config.epochs):
        lr = learning_rate(epoch, config)
        for group in optimizer.param_groups:
            group["lr"] = lr
        loader = record_loader(dataset, config, epoch=epoch, shuffle=True)
        sums = {"total": 0.0, "patch": 0.0, "rect": 0.0, "class": 0.0}
        crop_hits = crop_total = patch_hits = patch_total = 0
        steps = 0
        for batch in loader:
            optimizer.zero_grad()
            needs_patches = config.variant != "global"
            needs_thumbs = config.variant != "patch"
            pred = model(
                patches=batch["patches"] if needs_patches else None,
                thumbs=batch["thumb"] if needs_thumbs else None,
            )
            try:
                breakdown = compute_loss(
                    pred, batch["labels"], batch["rect"], batch["cropped"], config.loss_weights
                )
            except NonFiniteLossError as exc:
                _save_checkpoint(ckpt_path, last_finite, config, "records", epoch)
                raise TrainingDiverged(
                    f"epoch {epoch} step {steps}: {exc}", ckpt_path
                ) from exc
            breakdown.total.backward()
            optimizer.step()
            with torch.no_grad():
                for key in sums:
                    sums[key] += breakdown[key].detach().item()
                crop_pred = (pred.crop_prob > 0.5).to(torch.float32)
                crop_hits += int((crop_pred == batch["cropped"]).sum())
                crop_total += len(crop_pred)
                if pred.patch_logits is not None:
                    hits = pred.patch_logits.argmax(dim=2) == batch["labels"]
                    patch_hits += int(hits.sum())
                    patch_total += hits.numel()
            steps += 1
            if max_steps_per_epoch is not None and steps >= max_steps_per_epoch:
                break
        if steps == 0:
            raise RuntimeError("training split is empty")
        record = {
            "epoch": epoch,
            "lr": lr,
            "steps": steps,
            "loss_total": sums["total"] / steps,
            "loss_patch": sums["patch"] / steps,
            "loss_rect": sums["rect"] / steps,
            "loss_class": sums["class"] / steps,
            "crop_accuracy": crop_hits / crop_total,
            "patch_accuracy": (patch_hits / patch_total) if patch_total else None,
        }
        epochs.append(record)
        log.info(
            "epoch %d lr %.5f loss %.4f crop_acc %.3f patch_acc %s",
            epoch, lr, record["loss_total"], record["crop_accuracy"],
            "-" if record["patch_accuracy"] is None else f"{record['patch_accuracy']:.3f}",
        )
        if not all(
            _is_finite_number(record[k])
            for k in ("loss_total", "loss_patch", "loss_rect", "loss_class")
        ):
            _save_checkpoint(ckpt_path, last_finite, config, "records", epoch)
            _write_metrics(out_dir, "records", config, epochs)
            raise TrainingDiverged(f"epoch {epoch}: non-finite epoch loss", ckpt_path)
        last_finite = _finite_state(model)
        _save_checkpoint(ckpt_path, last_finite, config, "records", epoch + 1)
        _write_metrics(out_dir, "records", config, epochs)
    metrics = {"mode": "records", "config": config.to_dict(), "epochs": epochs}
    return metrics


def train_pretext(
    dataset_dir: str | Path,
    batches_path: str | Path,
    out_dir: str | Path,
    config: ModelConfig,
    uncropped_only: bool = False,
) -> dict:
    """Train only the patch branch on pre-assembled pretext batches.

    Consumes the batch-assembly output verbatim: each optimization step sees
    exactly one stored batch, preserving its cyclic grid-slot composition.
    Only the patch trunk and its classification head receive updates.
    With ``uncropped_only`` the patches of cropped records are skipped, so the
    task is learned purely from full-frame geometry.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    if config.variant == "global":
        raise ValueError("pretext training requires a patch branch; variant is 'global'")
    model = build_model(config)
    model.train()
    params = list(model.patch_trunk.parameters()) + list(model.patch_head.parameters())
    optimizer = torch.optim.Adam(params, lr=config.lr_start)
    dataset = PretextBatchDataset(
        dataset_dir,
        batches_path,
        augment=config.augment,
        seed=config.seed,
        uncropped_only=uncropped_only,
    )
    ckpt_path = out_dir / CHECKPOINT_NAME
    last_finite = _finite_state(model)
    _save_checkpoint(ckpt_path, last_finite, config, "pretext", 0)
    ce = nn.CrossEntropyLoss()
    epochs: list[dict] = []
    for epoch in range(config.epochs):
        lr = learning_rate(epoch, config)
        for group in optimizer.param_groups:
            group["lr"] = lr
        loader = pretext_loader(dataset, config, epoch=epoch, shuffle_batches=True)
        loss_sum = 0.0
        hits = total = steps = 0
        for batch in loader:
            optimizer.zero_grad()
            embeddings = model.patch_trunk(batch["patch"])
            logits = model.patch_head(embeddings)
            loss = ce(logits, batch["label"])
            if not torch.isfinite(loss):
                _save_checkpoint(ckpt_path, last_finite, config, "pretext", epoch)
                raise TrainingDiverged(
                    f"epoch {epoch} step {steps}: non-finite pretext loss", ckpt_path
                )
            loss.backward()
            optimizer.step()
            loss_sum += loss.detach().item()
            hits += int((logits.argmax(dim=1) == batch["label"]).sum())
            total += len(batch["label"])
            steps += 1
        record = {
            "epoch": epoch,
            "lr": lr,
            "steps": steps,
            "items": total,
            "loss_patch": loss_sum / steps,
            "patch_accuracy": hits / total,
        }
        epochs.append(record)
        log.info(
            "pretext epoch %d lr %.5f loss %.4f patch_acc %.3f",
            epoch, lr, record["loss_patch"], record["patch_accuracy"],
        )
        last_finite = _finite_state(model)
        _save_checkpoint(ckpt_path, last_finite, config, "pretext", epoch + 1)
        _write_metrics(out_dir, "pretext", config, epochs)
    return {"mode": "pretext", "config": config.to_dict(), "epochs": epochs}


def _is_finite_number(value) -> bool:
    if value is None:
        return True
    return value == value and value not in (float("inf"), float("-inf"))
