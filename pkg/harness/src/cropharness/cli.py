"""Command-line interface: train, evaluate, selectivity, visualize.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Logs go to stderr;
machine-readable results go to stdout or to files named by --out.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .config import ModelConfig, VARIANTS
from .data import DataError
from .evaluate import evaluate
from .model import ConstructionError
from .selectivity import selectivity_curve
from .train import TrainingDiverged, load_checkpoint, train_pretext, train_records
from .visualize import MODES, visualize

log = logging.getLogger("cropharness")


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if verbose else logging.INFO)


@click.group()
@click.version_option(version=__version__, prog_name="cropharness")
@click.option("--verbose", is_flag=True, help="Debug logging to stderr.")
def main(verbose: bool) -> None:
    """Train and inspect crop-detection models on cropforge datasets."""
    _setup_logging(verbose)


def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, ConstructionError) as exc:
        raise click.UsageError(str(exc)) from exc
    except (DataError, TrainingDiverged, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--variant", type=click.Choice(VARIANTS), default="joint", show_default=True)
@click.option("--epochs", type=int, default=25, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--base-width", type=int, default=64, show_default=True,
              help="Residual trunk width; 64 is the full-size network.")
@click.option("--lr-start", type=float, default=5e-3, show_default=True)
@click.option("--lr-end", type=float, default=1.5e-3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split", default="train", show_default=True,
              help="Manifest split to train on; 'all' uses every record.")
@click.option("--augment/--no-augment", default=True, show_default=True,
              help="Re-randomize patch pixel pitch each epoch.")
@click.option("--workers", type=int, default=0, show_default=True,
              help="Data-loading workers; 0 keeps loading on the main process.")
@click.option("--pretext", "pretext_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Batches JSON: train only the patch branch on it.")
@click.option("--uncropped-only", is_flag=True, default=False,
              help="Pretext mode: skip patches that come from cropped records.")
def train(dataset_dir, out_dir, variant, epochs, batch_size, base_width, lr_start,
          lr_end, seed, split, augment, workers, pretext_path, uncropped_only):
    """Train a model on DATASET_DIR, writing checkpoint and metrics to OUT_DIR."""
    try:
        config = ModelConfig(
            variant=variant, epochs=epochs, batch_size=batch_size,
            base_width=base_width, lr_start=lr_start, lr_end=lr_end,
            seed=seed, augment=augment, workers=workers,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    split_arg = None if split == "all" else split
    if pretext_path is not None:
        metrics = _run(
            train_pretext, dataset_dir, pretext_path, out_dir, config,
            uncropped_only=uncropped_only,
        )
    else:
        if uncropped_only:
            raise click.UsageError("--uncropped-only only applies with --pretext")
        metrics = _run(train_records, dataset_dir, out_dir, config, split=split_arg)
    last = metrics["epochs"][-1]
    click.echo(json.dumps({"out_dir": str(out_dir), "final_epoch": last}, sort_keys=True))


@main.command("evaluate")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--split", default="val", show_default=True,
              help="Manifest split to score; 'all' uses every record.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the metrics JSON to this file.")
def evaluate_cmd(checkpoint, dataset_dir, split, out_path):
    """Score CHECKPOINT on DATASET_DIR; prints metrics JSON on stdout."""
    model, _ = _run(load_checkpoint, checkpoint)
    split_arg = None if split == "all" else split
    metrics = _run(evaluate, model, dataset_dir, split=split_arg)
    payload = json.dumps(metrics, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    click.echo(payload)


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--split", default="val", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the curve JSON to this file.")
def selectivity(checkpoint, dataset_dir, split, out_path):
    """Patch accuracy at ten confidence-ranked response rates."""
    model, _ = _run(load_checkpoint, checkpoint)
    split_arg = None if split == "all" else split
    curve = _run(selectivity_curve, model, dataset_dir, split=split_arg)
    payload = json.dumps(curve, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    click.echo(payload)


@main.command("visualize")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--mode", type=click.Choice(MODES), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True,
              help="Output PNG path.")
@click.option("--split", default=None, help="Restrict to a manifest split.")
@click.option("--record", "record_index", type=int, default=0, show_default=True,
              help="Sample index for gradcam.")
@click.option("--seed", type=int, default=0, show_default=True)
def visualize_cmd(checkpoint, dataset_dir, mode, out_path, split, record_index, seed):
    """Render one inspection image for CHECKPOINT over DATASET_DIR."""
    model, _ = _run(load_checkpoint, checkpoint)
    _run(
        visualize, model, dataset_dir, mode, out_path,
        split=split, record_index=record_index, seed=seed,
    )
    click.echo(json.dumps({"mode": mode, "out": str(out_path)}))


if __name__ == "__main__":
    main()
