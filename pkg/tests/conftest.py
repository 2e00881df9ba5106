"""Shared fixtures: procedural texture images and a small synthetic corpus."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cropforge.buffer import ImageBuffer


def texture(width: int, height: int, seed: int) -> np.ndarray:
    """Smooth random texture, float32 (3, H, W) in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    f1, f2, f3 = rng.uniform(2.0, 9.0, 3)
    p1, p2 = rng.uniform(0.0, 2 * np.pi, 2)
    r = 0.5 + 0.3 * np.sin(f1 * xx / width + p1) * np.cos(f2 * yy / height + p2)
    g = 0.5 + 0.3 * np.cos(f3 * xx / width + p2) * np.sin(f1 * yy / height + p1)
    b = 0.5 + 0.3 * np.sin((f1 + f2) * (xx + yy) / (width + height))
    return np.clip(np.stack([r, g, b]), 0.0, 1.0).astype(np.float32)


def texture_buffer(width: int, height: int, seed: int) -> ImageBuffer:
    return ImageBuffer(texture(width, height, seed))


def write_texture_png(path: Path, width: int, height: int, seed: int) -> None:
    arr = (texture(width, height, seed).transpose(1, 2, 0) * 255).astype(np.uint8)
    Image.fromarray(arr).save(path, "PNG")


def build_corpus(root: Path, n: int, width: int = 1026, height: int = 684,
                 seed0: int = 1000) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        write_texture_png(root / f"img_{i:03d}.png", width, height, seed0 + i)
    return root


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Path:
    """Six valid landscape sources; enough for engine round trips."""
    return build_corpus(tmp_path_factory.mktemp("corpus_small"), 6)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, small_corpus) -> Path:
    """One generated dataset over the small corpus, neutral profile."""
    from cropforge.dataset import assign_splits, generate, scan_and_filter
    from cropforge.lens import AberrationProfile

    out = tmp_path_factory.mktemp("ds_small") / "ds"
    manifest = assign_splits(scan_and_filter(small_corpus, master_seed=3))
    generate(manifest, AberrationProfile(), out, workers=1)
    return out
