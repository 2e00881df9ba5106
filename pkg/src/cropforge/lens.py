"""Lens aberration synthesis: chromatic scaling, vignetting, radial
distortion, and saturation, each with a continuously controllable strength
and an exact identity at neutral strength.

All geometric stages share the warp primitive and its pixel-center
convention. Radii are normalized so r = 1 at the geometric image corners
(distance hypot(W/2, H/2) from the image center). Composition order in
:func:`apply_profile` is fixed: radial distortion, then chromatic scaling,
then vignetting, then saturation — geometry before photometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .buffer import ImageBuffer, clamp01
from .errors import PipelineError
from .resample import luma, warp_by_maps, warp_plane

__all__ = [
    "DEFAULT_VIGNETTE_PARAMS",
    "AberrationProfile",
    "apply_tca",
    "vignette_gain",
    "apply_vignetting",
    "apply_radial_distortion",
    "apply_saturation",
    "apply_profile",
]

# Sixth-degree even polynomial coefficients (a, b, c) of the default
# vignetting gain g(r) = 1 + a r^2 + b r^4 + c r^6.
DEFAULT_VIGNETTE_PARAMS: tuple[float, float, float] = (2.0625, 8.75, 0.0313)

# Newton solve parameters for inverting the radial distortion cubic.
_NEWTON_TOL = 1e-8
_NEWTON_MAX_ITERS = 25


@dataclass(frozen=True)
class AberrationProfile:
    """One lens configuration; the default constructor is exactly neutral."""

    tca_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    vignette_strength: float = 0.0
    vignette_params: tuple[float, float, float] = DEFAULT_VIGNETTE_PARAMS
    distortion_k1: float = 0.0
    saturation: float = 1.0

    def __post_init__(self) -> None:
        scales = tuple(float(s) for s in self.tca_scale)
        if len(scales) != 3:
            raise ValueError("tca_scale must have exactly three entries")
        for s in scales:
            if not (0.99 <= s <= 1.01):
                raise ValueError(f"tca_scale entries must lie in [0.99, 1.01], got {s}")
        object.__setattr__(self, "tca_scale", scales)
        params = tuple(float(p) for p in self.vignette_params)
        if len(params) != 3 or not all(np.isfinite(params)):
            raise ValueError(f"vignette_params must be three finite floats, got {params}")
        object.__setattr__(self, "vignette_params", params)
        t = float(self.vignette_strength)
        if not (0.0 <= t <= 1.5):
            raise ValueError(f"vignette_strength must lie in [0, 1.5], got {t}")
        object.__setattr__(self, "vignette_strength", t)
        k1 = float(self.distortion_k1)
        if not (-0.2 <= k1 <= 0.2):
            raise ValueError(f"distortion_k1 must lie in [-0.2, 0.2], got {k1}")
        object.__setattr__(self, "distortion_k1", k1)
        s = float(self.saturation)
        if not (s >= 0.0 and np.isfinite(s)):
            raise ValueError(f"saturation must be >= 0, got {s}")
        object.__setattr__(self, "saturation", s)

    @property
    def is_neutral(self) -> bool:
        return (
            self.tca_scale == (1.0, 1.0, 1.0)
            and self.vignette_strength == 0.0
            and self.distortion_k1 == 0.0
            and self.saturation == 1.0
        )

    def to_dict(self) -> dict:
        return {
            "tca_scale": list(self.tca_scale),
            "vignette_strength": self.vignette_strength,
            "vignette_params": list(self.vignette_params),
            "distortion_k1": self.distortion_k1,
            "saturation": self.saturation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AberrationProfile":
        return cls(
            tca_scale=tuple(d["tca_scale"]),
            vignette_strength=d["vignette_strength"],
            vignette_params=tuple(d["vignette_params"]),
            distortion_k1=d["distortion_k1"],
            saturation=d["saturation"],
        )


def _center_grids(img: ImageBuffer) -> tuple[np.ndarray, np.ndarray]:
    xs = np.arange(img.width, dtype=np.float64) + 0.5
    ys = np.arange(img.height, dtype=np.float64) + 0.5
    return np.meshgrid(xs, ys)


def _normalized_radius(img: ImageBuffer) -> np.ndarray:
    """Radius of every pixel center, 1.0 at the geometric image corners."""
    gx, gy = _center_grids(img)
    cx, cy = img.width / 2.0, img.height / 2.0
    return np.hypot(gx - cx, gy - cy) / np.hypot(cx, cy)


def apply_tca(
    img: ImageBuffer,
    scales: tuple[float, float, float],
    center: tuple[float, float] | None = None,
) -> ImageBuffer:
    """Magnify each channel by its own factor about the optical center.

    Rendered by inverse warping: output_c(p) samples input_c at
    ``center + (p - center) / s_c``, so ``s_c < 1`` shrinks that channel
    inward. Channels with scale exactly 1 are copied untouched.
    """
    scales = tuple(float(s) for s in scales)
    if len(scales) != 3:
        raise ValueError("scales must have exactly three entries")
    for s in scales:
        if not (s > 0.0 and np.isfinite(s)):
            raise ValueError(f"channel scale must be positive, got {s}")
    if center is None:
        cx, cy = img.width / 2.0, img.height / 2.0
    else:
        cx, cy = float(center[0]), float(center[1])
    gx, gy = _center_grids(img)
    planes = np.empty_like(np.asarray(img.planes))
    for c, s in enumerate(scales):
        if s == 1.0:
            planes[c] = img.planes[c]
            continue
        map_x = cx + (gx - cx) / s
        map_y = cy + (gy - cy) / s
        planes[c] = warp_plane(img.planes[c], map_x, map_y)
    return ImageBuffer(clamp01(planes))


def vignette_gain(r, params: tuple[float, float, float] = DEFAULT_VIGNETTE_PARAMS):
    """Radial gain g(r) = 1 + a r^2 + b r^4 + c r^6 (scalar or array)."""
    a, b, c = (float(p) for p in params)
    r2 = np.square(np.asarray(r, dtype=np.float64))
    return 1.0 + r2 * (a + r2 * (b + r2 * c))


def apply_vignetting(
    img: ImageBuffer,
    t: float,
    params: tuple[float, float, float] = DEFAULT_VIGNETTE_PARAMS,
) -> ImageBuffer:
    """Blend every pixel toward its fully vignetted value by factor ``t``.

    out = (1 - t) * in + t * in / g(r), identically on all channels; t may
    exceed 1 to extrapolate beyond the fully modified state.
    """
    t = float(t)
    if t < 0.0:
        raise ValueError(f"vignetting strength must be >= 0, got {t}")
    if t == 0.0:
        return img
    gain = vignette_gain(_normalized_radius(img), params)
    weight = (1.0 - t) + t / gain
    out = img.planes.astype(np.float64) * weight
    return ImageBuffer(clamp01(out))


def apply_radial_distortion(img: ImageBuffer, k1: float) -> ImageBuffer:
    """Single-coefficient radial distortion, rendered by inverse warping.

    The forward model maps a source radius to r_d = r_s * (1 + k1 * r_s^2)
    in coordinates normalized to r = 1 at the image corners; k1 > 0 pushes
    points outward (pincushion rendering geometry), k1 < 0 barrel. For each
    destination pixel the source radius solves k1*r_s^3 + r_s - r_d = 0 via
    Newton iteration from r_s = r_d.
    """
    k1 = float(k1)
    if not np.isfinite(k1):
        raise ValueError(f"k1 must be finite, got {k1}")
    if 1.0 + 6.0 * k1 <= 0.0:
        raise ValueError(
            f"k1={k1} makes the forward radius map non-monotone on [0, sqrt(2)] "
            f"(requires 1 + 6*k1 > 0)"
        )
    if k1 == 0.0:
        return img
    gx, gy = _center_grids(img)
    cx, cy = img.width / 2.0, img.height / 2.0
    norm = np.hypot(cx, cy)
    rd = np.hypot(gx - cx, gy - cy) / norm
    rs = rd.copy()
    for _ in range(_NEWTON_MAX_ITERS):
        f = (k1 * rs * rs + 1.0) * rs - rd
        fp = 3.0 * k1 * rs * rs + 1.0
        step = f / fp
        rs -= step
        if np.max(np.abs(step)) < _NEWTON_TOL:
            break
    else:
        raise PipelineError(
            f"radius inversion did not converge for k1={k1} "
            f"(max residual step {np.max(np.abs(step)):.3e})"
        )
    factor = np.divide(rs, rd, out=np.ones_like(rd), where=rd > 0.0)
    map_x = cx + (gx - cx) * factor
    map_y = cy + (gy - cy) * factor
    return warp_by_maps(img, map_x, map_y)


def invert_distorted_radius(r_d: float, k1: float) -> float:
    """Source radius whose forward-distorted radius is ``r_d`` (scalar probe)."""
    rs = float(r_d)
    for _ in range(_NEWTON_MAX_ITERS):
        step = ((k1 * rs * rs + 1.0) * rs - r_d) / (3.0 * k1 * rs * rs + 1.0)
        rs -= step
        if abs(step) < _NEWTON_TOL:
            return rs
    raise PipelineError(f"radius inversion did not converge for r_d={r_d}, k1={k1}")


def apply_saturation(img: ImageBuffer, s: float) -> ImageBuffer:
    """Scale chroma about the luma axis: out = y + s * (in - y), clamped.

    s = 1 returns the buffer unchanged; s = 0 collapses to grayscale; gray
    pixels are fixed points for every s because their chroma term is exactly
    zero.
    """
    s = float(s)
    if s < 0.0:
        raise ValueError(f"saturation factor must be >= 0, got {s}")
    if s == 1.0:
        return img
    y = luma(img).astype(np.float64)
    out = y + s * (img.planes.astype(np.float64) - y)
    return ImageBuffer(clamp01(out))


def apply_profile(img: ImageBuffer, profile: AberrationProfile) -> ImageBuffer:
    """Apply a full lens configuration in the fixed stage order.

    Stages at neutral strength are skipped outright, so the neutral profile
    is the exact identity and a single-aberration profile equals the
    corresponding standalone call bit for bit.
    """
    out = img
    if profile.distortion_k1 != 0.0:
        out = apply_radial_distortion(out, profile.distortion_k1)
    if profile.tca_scale != (1.0, 1.0, 1.0):
        out = apply_tca(out, profile.tca_scale)
    if profile.vignette_strength != 0.0:
        out = apply_vignetting(out, profile.vignette_strength, profile.vignette_params)
    if profile.saturation != 1.0:
        out = apply_saturation(out, profile.saturation)
    return out
