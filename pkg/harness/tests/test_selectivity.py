import numpy as np
import pytest
import torch

from cropharness.config import ModelConfig
from cropharness.model import build_model
from cropharness.selectivity import (
    RESPONSE_RATES,
    curve_from_predictions,
    selectivity_curve,
)


def test_curve_has_ten_points_and_full_coverage():
    rng = np.random.default_rng(0)
    conf = rng.random(200)
    correct = rng.random(200) < 0.3
    curve = curve_from_predictions(conf, correct)
    assert [p["response_rate"] for p in curve] == list(RESPONSE_RATES)
    assert curve[-1]["response_rate"] == 1.0
    assert curve[-1]["n_kept"] == 200
    assert curve[-1]["accuracy"] == pytest.approx(correct.mean())


def test_kept_count_rule():
    conf = np.linspace(0, 1, 37)
    correct = np.ones(37, dtype=bool)
    curve = curve_from_predictions(conf, correct)
    for point in curve:
        expected = max(1, int(round(point["response_rate"] * 37)))
        assert point["n_kept"] == expected


def test_confidence_aligned_oracle_gives_monotone_curve():
    # most-confident predictions are correct, least-confident wrong:
    # accuracy must fall (weakly) as the response rate grows
    n = 100
    conf = np.linspace(1.0, 0.0, n)
    correct = np.zeros(n, dtype=bool)
    correct[: n // 2] = True
    curve = curve_from_predictions(conf, correct)
    accs = [p["accuracy"] for p in curve]
    assert all(a >= b - 1e-12 for a, b in zip(accs, accs[1:]))
    assert accs[0] == 1.0
    assert accs[-1] == pytest.approx(0.5)


def test_selection_is_by_descending_confidence():
    conf = np.array([0.1, 0.9, 0.5, 0.7])
    correct = np.array([False, True, False, True])
    curve = curve_from_predictions(conf, correct)
    half = next(p for p in curve if p["response_rate"] == 0.5)
    # top half = the two most confident (0.9, 0.7), both correct
    assert half["n_kept"] == 2
    assert half["accuracy"] == 1.0


def test_ties_are_stable():
    conf = np.full(10, 0.5)
    correct = np.array([True] * 5 + [False] * 5)
    curve = curve_from_predictions(conf, correct)
    half = next(p for p in curve if p["response_rate"] == 0.5)
    # equal confidences keep input order, so the first five are selected
    assert half["accuracy"] == 1.0


def test_selectivity_curve_over_dataset(forge_dataset):
    torch.manual_seed(1)
    model = build_model(ModelConfig(base_width=8)).eval()
    curve = selectivity_curve(model, forge_dataset, split=None)
    assert len(curve) == len(RESPONSE_RATES)
    assert curve[-1]["n_kept"] == 24 * 16
    for point in curve:
        assert 0.0 <= point["accuracy"] <= 1.0


def test_global_variant_rejected(forge_dataset):
    model = build_model(ModelConfig(variant="global", base_width=8))
    with pytest.raises(ValueError, match="patch"):
        selectivity_curve(model, forge_dataset, split=None)


def test_mismatched_lengths_rejected():
    with pytest.raises(ValueError):
        curve_from_predictions(np.ones(3), np.ones(4, dtype=bool))
