"""Pure-NumPy kernel backend.

Floating-point op order here is the reference contract: the compiled backend
replays the same sequence (per output element: ``acc += weight * value`` over
taps in ascending order, accumulated in float64, stored as float32), so both
backends produce bit-identical output. Keep any change mirrored in
``_cykernels.pyx``.
"""

from __future__ import annotations

import numpy as np


def resample_h(plane: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
    """Resample along axis 1 (width). plane float32 (H, W_in) -> (H, W_out)."""
    src = plane.astype(np.float64)
    n_out, n_taps = idx.shape
    acc = np.zeros((plane.shape[0], n_out), dtype=np.float64)
    for m in range(n_taps):
        acc += wts[:, m] * src[:, idx[:, m]]
    return acc.astype(np.float32)


def resample_v(plane: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
    """Resample along axis 0 (height). plane float32 (H_in, W) -> (H_out, W)."""
    src = plane.astype(np.float64)
    n_out, n_taps = idx.shape
    acc = np.zeros((n_out, plane.shape[1]), dtype=np.float64)
    for m in range(n_taps):
        acc += wts[:, m][:, None] * src[idx[:, m], :]
    return acc.astype(np.float32)


def warp_bilinear(plane: np.ndarray, map_x: np.ndarray, map_y: np.ndarray) -> np.ndarray:
    """Sample `plane` at continuous pixel-center coords (map_x, map_y).

    Maps are float64 arrays of the output shape, already clipped to
    [0.5, dim - 0.5] so every 2x2 neighborhood is in bounds after clamping.
    """
    h_in, w_in = plane.shape
    src = plane.astype(np.float64)
    tx = map_x - 0.5
    ty = map_y - 0.5
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    fx = tx - x0
    fy = ty - y0
    x0 = np.clip(x0, 0, w_in - 1)
    y0 = np.clip(y0, 0, h_in - 1)
    x1 = np.minimum(x0 + 1, w_in - 1)
    y1 = np.minimum(y0 + 1, h_in - 1)
    v00 = src[y0, x0]
    v01 = src[y0, x1]
    v10 = src[y1, x0]
    v11 = src[y1, x1]
    top = (1.0 - fx) * v00 + fx * v01
    bot = (1.0 - fx) * v10 + fx * v11
    out = (1.0 - fy) * top + fy * bot
    return out.astype(np.float32)
