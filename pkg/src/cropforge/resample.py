"""Geometric resampling primitives: separable resize, bilinear warp, luma.

All coordinates follow the pixel-center convention: pixel ``(col, row)`` has
its center at continuous coordinate ``(col + 0.5, row + 0.5)``, and resizing
maps output pixel centers onto the source grid by pure scaling. Edge handling
is clamp-to-edge everywhere. Values are float32 in [0, 1]; kernel overshoot
(CUBIC / LANCZOS4) is clamped immediately after filtering.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .buffer import ImageBuffer, InterpMethod, clamp01
from .errors import PipelineError
from .kernels import axis_taps, resample_h, resample_v, warp_bilinear

__all__ = ["resize", "warp", "warp_by_maps", "warp_plane", "luma"]


def resize(img: ImageBuffer, width: int, height: int, method: InterpMethod) -> ImageBuffer:
    """Resize to exactly ``width x height`` with the given kernel.

    Separable: the horizontal pass runs first, then the vertical pass, each
    accumulating in float64 and storing float32. Resizing to the source
    dimensions is a bit-exact identity for every method.
    """
    if width < 1 or height < 1:
        raise ValueError(f"resize target must be >= 1x1, got {width}x{height}")
    method = InterpMethod(method)
    idx_h, wts_h = axis_taps(img.width, width, method)
    idx_v, wts_v = axis_taps(img.height, height, method)
    planes = np.empty((3, height, width), dtype=np.float32)
    for c in range(3):
        mid = resample_h(img.planes[c], idx_h, wts_h)
        planes[c] = resample_v(mid, idx_v, wts_v)
    return ImageBuffer(clamp01(planes))


def _checked_map(arr: np.ndarray, shape: tuple[int, int], axis_name: str) -> np.ndarray:
    out = np.broadcast_to(np.asarray(arr, dtype=np.float64), shape)
    bad = ~np.isfinite(out)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise PipelineError(
            f"non-finite source {axis_name}-coordinate for destination pixel "
            f"(x={int(col)}, y={int(row)})"
        )
    return out


def _clip_maps(
    map_x: np.ndarray, map_y: np.ndarray, width: int, height: int
) -> tuple[np.ndarray, np.ndarray]:
    # Clamp-to-edge: pulling a source coordinate back to the border pixel's
    # center makes bilinear sampling return exactly that border value.
    mx = np.clip(map_x, 0.5, width - 0.5)
    my = np.clip(map_y, 0.5, height - 0.5)
    return np.ascontiguousarray(mx), np.ascontiguousarray(my)


def warp_plane(plane: np.ndarray, map_x: np.ndarray, map_y: np.ndarray) -> np.ndarray:
    """Bilinearly sample one float32 plane at source coords (already finite).

    ``map_x`` / ``map_y`` give, for each destination pixel, the continuous
    source pixel-center coordinate to sample. Returns float32.
    """
    h, w = plane.shape
    mx, my = _clip_maps(map_x, map_y, w, h)
    return warp_bilinear(plane, mx, my)


def warp_by_maps(img: ImageBuffer, map_x: np.ndarray, map_y: np.ndarray) -> ImageBuffer:
    """Warp all three channels through one shared inverse map (as arrays)."""
    shape = (img.height, img.width)
    mx = _checked_map(map_x, shape, "x")
    my = _checked_map(map_y, shape, "y")
    planes = np.empty((3, img.height, img.width), dtype=np.float32)
    for c in range(3):
        planes[c] = warp_plane(img.planes[c], mx, my)
    return ImageBuffer(clamp01(planes))


def warp(
    img: ImageBuffer,
    inverse_map: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
) -> ImageBuffer:
    """Warp through a vectorized inverse map.

    ``inverse_map(x_d, y_d) -> (x_s, y_s)`` receives float64 arrays holding
    every destination pixel-center coordinate and returns the source
    coordinates to sample (broadcastable to the image shape). Out-of-bounds
    source coordinates clamp to the edge; non-finite ones raise
    :class:`PipelineError` naming the offending destination pixel.
    """
    xs = np.arange(img.width, dtype=np.float64) + 0.5
    ys = np.arange(img.height, dtype=np.float64) + 0.5
    grid_x, grid_y = np.meshgrid(xs, ys)
    src_x, src_y = inverse_map(grid_x, grid_y)
    return warp_by_maps(img, src_x, src_y)


def luma(img: ImageBuffer) -> np.ndarray:
    """Rec.601 luma plane, float32 (H, W).

    Computed as ``B + 0.299*(R-B) + 0.587*(G-B)``, algebraically equal to
    ``0.299*R + 0.587*G + 0.114*B`` but exactly equal to the gray level on
    R==G==B inputs (the weights sum to 1 by construction, not by rounding).
    """
    r = img.planes[0].astype(np.float64)
    g = img.planes[1].astype(np.float64)
    b = img.planes[2].astype(np.float64)
    y = b + 0.299 * (r - b) + 0.587 * (g - b)
    return y.astype(np.float32)
