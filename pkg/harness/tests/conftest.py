"""Shared fixtures: cropforge datasets built through its CLI, never its API."""

from __future__ import annotations

import json
import subprocess
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cropharness.config import ModelConfig

TEXTURE_WIDTH = 1026
TEXTURE_HEIGHT = 684


def stationary_texture(
    rng: np.random.Generator, width: int = TEXTURE_WIDTH, height: int = TEXTURE_HEIGHT
) -> np.ndarray:
    """Band-passed noise over a flat base color: no global intensity gradients,
    so patch content carries no positional information on its own."""
    img = np.zeros((height, width, 3), dtype=np.float32)
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.rfftfreq(width)[None, :]
    radius = np.hypot(fy, fx)
    lo = rng.uniform(0.01, 0.08)
    hi = lo * rng.uniform(1.5, 4.0)
    band = ((radius >= lo) & (radius <= hi)).astype(np.float32)
    base = rng.uniform(0.25, 0.7, size=3)
    for ch in range(3):
        noise = rng.normal(size=(height, width)).astype(np.float32)
        filtered = np.fft.irfft2(np.fft.rfft2(noise) * band, s=(height, width))
        sd = filtered.std()
        if sd > 0:
            filtered = filtered / sd * rng.uniform(0.08, 0.18)
        img[:, :, ch] = base[ch] + filtered
    return np.clip(img, 0.0, 1.0)


def write_textures(directory: Path, count: int, seed: int) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        tex = stationary_texture(rng)
        Image.fromarray((tex * 255).astype(np.uint8)).save(directory / f"tex_{i:04d}.png")


def forge(*args: str) -> subprocess.CompletedProcess:
    """Run the cropforge CLI; the harness consumes it only through this boundary."""
    proc = subprocess.run(
        ["cropforge", *[str(a) for a in args]], capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise RuntimeError(
            f"cropforge {' '.join(map(str, args))} failed ({proc.returncode}):\n{proc.stderr}"
        )
    return proc


def build_dataset(
    root: Path,
    n_images: int,
    seed: int,
    profile_flags: tuple[str, ...] = (),
    texture_seed: int | None = None,
    name: str = "dataset",
) -> Path:
    """Textures -> scan -> generate, entirely through the cropforge CLI.

    Repeated calls with the same root reuse its textures and manifest, so two
    aberration profiles can be rendered from identical source images.
    """
    photos = root / "photos"
    if not photos.exists():
        write_textures(photos, n_images, texture_seed if texture_seed is not None else seed)
    manifest = root / "manifest.jsonl"
    if not manifest.exists():
        forge("scan", photos, "--out", manifest, "--seed", seed)
    dataset = root / name
    forge("generate", dataset, "--manifest", manifest, *profile_flags)
    return dataset


@pytest.fixture(scope="session")
def forge_dataset(tmp_path_factory) -> Path:
    """24 neutral records (11 cropped) over stationary textures."""
    root = tmp_path_factory.mktemp("forge_neutral")
    return build_dataset(root, 24, seed=11)


@pytest.fixture(scope="session")
def forge_batches(forge_dataset) -> Path:
    """Pretext batches over the train split of the session dataset."""
    out = forge_dataset.parent / "batches.json"
    forge("batches", forge_dataset, "--batch-size", 16, "--split", "train", "--out", out)
    return out


@pytest.fixture()
def tiny_config() -> ModelConfig:
    return ModelConfig(
        base_width=8, batch_size=4, epochs=2, seed=1, augment=False, workers=0
    )


def manifest_entries(dataset_dir: Path) -> list[dict]:
    lines = (Path(dataset_dir) / "manifest.jsonl").read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines[1:] if line.strip()]
