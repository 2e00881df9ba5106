"""Planar float32 image container and the interpolation method enum."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class InterpMethod(enum.Enum):
    """The five resampling kernels supported by :func:`cropforge.resample.resize`."""

    NEAREST = "nearest"
    LINEAR = "linear"
    AREA = "area"
    CUBIC = "cubic"
    LANCZOS4 = "lanczos4"


#: Fixed ordering used whenever a method is drawn uniformly at random.
METHOD_ORDER = (
    InterpMethod.NEAREST,
    InterpMethod.LINEAR,
    InterpMethod.AREA,
    InterpMethod.CUBIC,
    InterpMethod.LANCZOS4,
)


@dataclass(frozen=True)
class ImageBuffer:
    """Immutable 3-plane float32 image with intensities in [0, 1].

    ``planes`` has shape (3, height, width). The constructor takes ownership
    of the array: it is made read-only in place when it already is C-contiguous
    float32, otherwise a converted copy is stored.
    """

    planes: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.planes, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"expected planes of shape (3, H, W), got {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"image dimensions must be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("image intensities must be finite")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"intensities outside [0, 1]: min={lo}, max={hi}")
        arr.flags.writeable = False
        object.__setattr__(self, "planes", arr)

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @classmethod
    def constant(cls, width: int, height: int, rgb=(0.0, 0.0, 0.0)) -> "ImageBuffer":
        """Uniform image; ``rgb`` may be a scalar or a 3-tuple."""
        rgb = np.broadcast_to(np.asarray(rgb, dtype=np.float32), (3,))
        planes = np.empty((3, height, width), dtype=np.float32)
        planes[:] = rgb[:, None, None]
        return cls(planes)

    @classmethod
    def from_interleaved(cls, hwc: np.ndarray) -> "ImageBuffer":
        """Build from an (H, W, 3) array."""
        hwc = np.asarray(hwc)
        if hwc.ndim != 3 or hwc.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3), got {hwc.shape}")
        return cls(np.ascontiguousarray(hwc.transpose(2, 0, 1)))

    def to_interleaved(self) -> np.ndarray:
        """Return an (H, W, 3) float32 copy."""
        return np.ascontiguousarray(self.planes.transpose(1, 2, 0))

    def plane(self, index: int) -> np.ndarray:
        """One channel as a read-only (H, W) view."""
        return self.planes[index]

    def allclose(self, other: "ImageBuffer", tol: float = 1e-6) -> bool:
        if self.planes.shape != other.planes.shape:
            return False
        return bool(np.max(np.abs(self.planes - other.planes)) <= tol)


def clamp01(arr: np.ndarray) -> np.ndarray:
    """Clamp filter overshoot into the legal intensity range, as float32."""
    return np.clip(arr, 0.0, 1.0).astype(np.float32, copy=False)
