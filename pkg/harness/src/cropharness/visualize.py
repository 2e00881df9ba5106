"""Model inspection plots: activation heatmaps, embedding maps, filter grids.

``gradcam`` attributes the crop decision to thumbnail regions by weighting
the last residual stage's activations with the pooled gradient of the crop
logit. ``embed`` projects global-branch embeddings 64 -> 24 by PCA and then
to 2-D with t-SNE, colored by each sample's size factor. ``filters`` tiles
the first convolution layer's kernels as RGB tiles.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from sklearn.decomposition import PCA
from sklearn.manifold import TSNE

from .config import THUMB_HEIGHT, THUMB_WIDTH
from .data import RecordDataset
from .evaluate import collect_predictions
from .model import CropDetector

__all__ = ["gradcam", "embed_map", "filter_grid", "visualize", "MODES"]

MODES = ("gradcam", "embed", "filters")

PCA_DIMS = 24


def gradcam(model: CropDetector, thumb: torch.Tensor) -> np.ndarray:
    """Heatmap (149, 224) in [0, 1] for the crop logit on one thumbnail.

    ``thumb`` is (5, 149, 224). Requires a global branch.
    """
    if model.global_trunk is None:
        raise ValueError("activation heatmaps require a global branch")
    if tuple(thumb.shape) != (5, THUMB_HEIGHT, THUMB_WIDTH):
        raise ValueError(
            f"thumbnail must be (5, {THUMB_HEIGHT}, {THUMB_WIDTH}), got {tuple(thumb.shape)}"
        )
    model.eval()
    captured: dict[str, torch.Tensor] = {}

    def hook(_module, _inputs, output):
        captured["acts"] = output
        output.retain_grad()

    handle = model.global_trunk.stages[-1].register_forward_hook(hook)
    try:
        pred = model(
            patches=None if model.patch_trunk is None else _zero_patches(model, thumb),
            thumbs=thumb.unsqueeze(0),
        )
        model.zero_grad()
        pred.crop_logit.sum().backward()
    finally:
        handle.remove()
    acts = captured["acts"]
    grads = acts.grad
    weights = grads.mean(dim=(2, 3), keepdim=True)
    cam = F.relu((weights * acts).sum(dim=1, keepdim=True))
    cam = F.interpolate(
        cam, size=(THUMB_HEIGHT, THUMB_WIDTH), mode="bilinear", align_corners=False
    )[0, 0].detach().numpy()
    span = cam.max() - cam.min()
    if span > 0:
        cam = (cam - cam.min()) / span
    else:
        cam = np.zeros_like(cam)
    return cam


def _zero_patches(model: CropDetector, thumb: torch.Tensor) -> torch.Tensor:
    # joint checkpoints need a patch input; a neutral zero batch keeps the
    # attribution purely about the thumbnail
    from .config import GRID_CELLS, PATCH_SIZE

    return thumb.new_zeros((1, GRID_CELLS, 3, PATCH_SIZE, PATCH_SIZE))


def _save_heatmap(cam: np.ndarray, out_path: Path) -> None:
    colored = plt.get_cmap("magma")(cam)[..., :3]
    Image.fromarray((colored * 255).astype(np.uint8)).save(out_path)


def embed_map(
    model: CropDetector,
    dataset: RecordDataset,
    out_path: str | Path,
    seed: int = 0,
) -> np.ndarray:
    """2-D map of global embeddings, one point per sample; writes a scatter plot.

    PCA reduces 64 -> 24 dimensions (capped by the sample count), then t-SNE
    maps to 2-D. Points are colored by size factor (1.0 for uncropped).
    """
    if model.global_trunk is None:
        raise ValueError("embedding maps require a global branch")
    model.eval()
    embeddings, factors = [], []
    with torch.no_grad():
        for i in range(len(dataset)):
            item = dataset[i]
            embeddings.append(model.global_trunk(item["thumb"].unsqueeze(0))[0].numpy())
            factors.append(float(item["size_factor"]))
    emb = np.stack(embeddings)
    factors = np.array(factors)
    n = len(emb)
    if n < 3:
        raise ValueError(f"embedding map needs at least 3 samples, got {n}")
    n_components = min(PCA_DIMS, n, emb.shape[1])
    reduced = PCA(n_components=n_components, random_state=seed).fit_transform(emb)
    perplexity = min(30.0, max(2.0, (n - 1) / 3.0))
    points = TSNE(
        n_components=2, perplexity=perplexity, random_state=seed, init="pca"
    ).fit_transform(reduced)
    fig, ax = plt.subplots(figsize=(6, 5))
    scatter = ax.scatter(points[:, 0], points[:, 1], c=factors, cmap="viridis", s=18)
    fig.colorbar(scatter, ax=ax, label="size factor")
    ax.set_title("global embeddings (PCA 24 + t-SNE)")
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return points


def filter_grid(model: CropDetector, out_path: str | Path) -> int:
    """Tile the first convolution's kernels as RGB images; returns the count.

    Uses the patch branch when present (its 3-channel kernels render
    directly), otherwise the first three input channels of the global branch.
    """
    trunk = model.patch_trunk if model.patch_trunk is not None else model.global_trunk
    weights = trunk.conv1.weight.detach()[:, :3].numpy()
    count = weights.shape[0]
    cols = int(np.ceil(np.sqrt(count)))
    rows = int(np.ceil(count / cols))
    k = weights.shape[-1]
    gap = 1
    canvas = np.ones((rows * (k + gap) + gap, cols * (k + gap) + gap, 3), dtype=np.float32)
    for idx in range(count):
        tile = weights[idx].transpose(1, 2, 0)
        span = tile.max() - tile.min()
        tile = (tile - tile.min()) / span if span > 0 else np.zeros_like(tile)
        r, c = divmod(idx, cols)
        y = gap + r * (k + gap)
        x = gap + c * (k + gap)
        canvas[y : y + k, x : x + k] = tile
    scale = 8
    img = Image.fromarray((canvas * 255).astype(np.uint8)).resize(
        (canvas.shape[1] * scale, canvas.shape[0] * scale), Image.Resampling.NEAREST
    )
    img.save(out_path)
    return count


def visualize(
    model: CropDetector,
    dataset_dir: str | Path,
    mode: str,
    out_path: str | Path,
    split: str | None = None,
    record_index: int = 0,
    seed: int = 0,
):
    """Dispatch one visualization mode; unknown modes raise ValueError."""
    out_path = Path(out_path)
    if mode == "gradcam":
        dataset = RecordDataset(dataset_dir, split=split, augment=False)
        cam = gradcam(model, dataset[record_index]["thumb"])
        _save_heatmap(cam, out_path)
        return cam
    if mode == "embed":
        dataset = RecordDataset(dataset_dir, split=split, augment=False)
        return embed_map(model, dataset, out_path, seed=seed)
    if mode == "filters":
        return filter_grid(model, out_path)
    raise ValueError(f"unknown visualization mode {mode!r}; expected one of {MODES}")
