"""Per-axis tap tables for the separable resampler.

Both kernel backends consume the exact same (indices, weights) arrays built
here, so any cross-backend divergence can only come from the accumulation
loops themselves. All geometry follows the pixel-center convention: source
pixel ``i`` spans ``[i, i+1)`` with its center at ``i + 0.5``, and destination
pixel ``o`` maps to the source coordinate ``(o + 0.5) * n_in / n_out``.
"""

from __future__ import annotations

import numpy as np

from ..buffer import InterpMethod


def _catmull_rom(d: np.ndarray) -> np.ndarray:
    # Keys cubic convolution kernel with a = -0.5.
    d = np.abs(d)
    near = (1.5 * d - 2.5) * d * d + 1.0
    far = ((-0.5 * d + 2.5) * d - 4.0) * d + 2.0
    return np.where(d <= 1.0, near, np.where(d < 2.0, far, 0.0))


def _lanczos4(d: np.ndarray) -> np.ndarray:
    w = np.sinc(d) * np.sinc(d / 4.0)
    return np.where(np.abs(d) < 4.0, w, 0.0)


def axis_taps(n_in: int, n_out: int, method: InterpMethod):
    """Tap table for one axis: (indices int32 (n_out, T), weights float64 (n_out, T)).

    Indices are pre-clamped to [0, n_in - 1] (clamp-to-edge). CUBIC, LANCZOS4
    and AREA weights are normalized to unit sum so constant images survive
    every kernel exactly.
    """
    if n_out < 1:
        raise ValueError(f"target dimension must be >= 1, got {n_out}")
    scale = n_in / n_out
    centers = (np.arange(n_out, dtype=np.float64) + 0.5) * scale

    if method is InterpMethod.NEAREST:
        idx = np.floor(centers).astype(np.int64)[:, None]
        wts = np.ones((n_out, 1), dtype=np.float64)
    elif method is InterpMethod.AREA:
        lo = np.arange(n_out, dtype=np.float64) * scale
        hi = lo + scale
        first = np.floor(lo).astype(np.int64)
        n_taps = int(np.ceil(scale)) + 1
        idx = first[:, None] + np.arange(n_taps)
        # overlap of the footprint [lo, hi) with source pixel [i, i+1)
        left = np.maximum(idx.astype(np.float64), lo[:, None])
        right = np.minimum(idx.astype(np.float64) + 1.0, hi[:, None])
        wts = np.clip(right - left, 0.0, None)
        wts /= wts.sum(axis=1, keepdims=True)
    else:
        t = centers - 0.5
        base = np.floor(t).astype(np.int64)
        if method is InterpMethod.LINEAR:
            idx = base[:, None] + np.arange(2)
            frac = t - base
            wts = np.stack([1.0 - frac, frac], axis=1)
        elif method is InterpMethod.CUBIC:
            idx = base[:, None] + np.arange(-1, 3)
            wts = _catmull_rom(idx.astype(np.float64) - t[:, None])
            wts /= wts.sum(axis=1, keepdims=True)
        elif method is InterpMethod.LANCZOS4:
            idx = base[:, None] + np.arange(-3, 5)
            wts = _lanczos4(idx.astype(np.float64) - t[:, None])
            wts /= wts.sum(axis=1, keepdims=True)
        else:
            raise ValueError(f"unknown interpolation method: {method!r}")

    idx = np.clip(idx, 0, n_in - 1)
    return (
        np.ascontiguousarray(idx, dtype=np.int32),
        np.ascontiguousarray(wts, dtype=np.float64),
    )
