import numpy as np
import pytest
import torch

from cropharness.config import ModelConfig
from cropharness.data import RecordDataset
from cropharness.evaluate import (
    collect_predictions,
    evaluate,
    metrics_from_predictions,
)
from cropharness.model import build_model


@pytest.fixture(scope="module")
def random_model():
    torch.manual_seed(42)
    return build_model(ModelConfig(base_width=8)).eval()


@pytest.fixture(scope="module")
def predictions(random_model, forge_dataset):
    ds = RecordDataset(forge_dataset, split=None, augment=False, seed=0)
    return collect_predictions(random_model, ds)


def test_prediction_array_shapes(predictions):
    n = len(predictions["cropped"])
    assert n == 24
    assert predictions["crop_prob"].shape == (n,)
    assert predictions["rect_hat"].shape == (n, 4)
    assert predictions["rect"].shape == (n, 4)
    assert predictions["patch_pred"].shape == (n, 16)
    assert predictions["patch_conf"].shape == (n, 16)
    assert predictions["patch_labels"].shape == (n, 16)
    assert predictions["record_id"].shape == (n,)


def test_untrained_model_scores_near_chance(predictions):
    metrics = metrics_from_predictions(predictions)
    assert metrics["n_samples"] == 24
    # balanced corpus: an untrained net cannot stray far from coin-flip
    assert abs(metrics["crop_accuracy"] - 0.5) <= 0.25
    # 384 patches, 16 classes: far below any learned accuracy
    assert metrics["patch_accuracy"] <= 0.20
    assert 0.0 <= metrics["rect_mae"] <= 1.0
    assert metrics["crop_chance"] == 0.5
    assert metrics["patch_chance"] == pytest.approx(1 / 16)


def test_oracle_predictions_score_perfectly(predictions):
    oracle = dict(predictions)
    oracle["crop_prob"] = predictions["cropped"].astype(np.float64)
    oracle["rect_hat"] = predictions["rect"].copy()
    oracle["patch_pred"] = predictions["patch_labels"].copy()
    metrics = metrics_from_predictions(oracle)
    assert metrics["crop_accuracy"] == 1.0
    assert metrics["rect_mae"] == 0.0
    assert metrics["patch_accuracy"] == 1.0


def test_anti_oracle_scores_zero(predictions):
    adversary = dict(predictions)
    adversary["crop_prob"] = 1.0 - predictions["cropped"].astype(np.float64)
    metrics = metrics_from_predictions(adversary)
    assert metrics["crop_accuracy"] == 0.0


def test_imbalanced_subset_warns(random_model, forge_dataset):
    ds = RecordDataset(forge_dataset, split=None, augment=False, seed=0)
    cropped_ids = [
        int(ds.meta(i)["record_id"]) for i in range(len(ds)) if ds.meta(i)["cropped"]
    ]
    with pytest.warns(UserWarning, match="imbalanced"):
        evaluate(random_model, forge_dataset, split=None, record_ids=cropped_ids)


def test_balanced_set_does_not_warn(predictions):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("error")
        metrics_from_predictions(predictions)


def test_global_variant_has_no_patch_accuracy(forge_dataset):
    torch.manual_seed(0)
    model = build_model(ModelConfig(variant="global", base_width=8)).eval()
    metrics = evaluate(model, forge_dataset, split=None)
    assert metrics["patch_accuracy"] is None
    assert metrics["variant"] == "global"
    assert metrics["n_samples"] == 24


def test_evaluate_split_annotated(random_model, forge_dataset):
    metrics = evaluate(random_model, forge_dataset, split="val")
    assert metrics["split"] == "val"
    assert metrics["n_samples"] < 24


def test_empty_arrays_rejected():
    with pytest.raises(ValueError, match="no samples"):
        metrics_from_predictions(
            {
                "cropped": np.zeros(0),
                "crop_prob": np.zeros(0),
                "rect_hat": np.zeros((0, 4)),
                "rect": np.zeros((0, 4)),
                "patch_pred": None,
            }
        )
