"""Crop sampling, patch-grid extraction with sensor-plane labels,
anti-shortcut resize chains, and thumbnail construction.

The sample preparation protocol is split into a *plan* (every random draw
and every derived integer/float quantity, computed without touching pixel
data) and an *execution* (pure resampling driven by the plan). The split
keeps the RNG draw order pinned in exactly one place and lets distribution
tests replay thousands of protocol draws cheaply.

Draw order per sample (one shared generator):
  1. crop rectangle (if cropping): size factor, pinned edge, free offset
  2. patch-branch resize: target width, interpolation method
  3. per patch slot k = 0..15: jitter dx, jitter dy
  4. thumbnail chain, three times: width, height, interpolation method
  5. final thumbnail interpolation method
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .buffer import METHOD_ORDER, ImageBuffer, InterpMethod
from .errors import PipelineError
from .lens import AberrationProfile, apply_profile
from .resample import resize

__all__ = [
    "PATCH_SIZE",
    "GRID_N",
    "JITTER_MAX",
    "THUMB_WIDTH",
    "THUMB_HEIGHT",
    "CropRect",
    "PatchSet",
    "Thumbnail",
    "SamplePlan",
    "SampleRecord",
    "round_half_up",
    "sample_crop_rect",
    "apply_crop",
    "patch_grid_centers",
    "patch_label",
    "pre_patch_resize",
    "fuzz_resize_chain",
    "make_thumbnail",
    "plan_sample",
    "execute_plan",
    "prepare_sample",
]

PATCH_SIZE = 96
GRID_N = 4
JITTER_MAX = 8
THUMB_WIDTH = 224
THUMB_HEIGHT = 149
RESIZE_WIDTH_MIN = 1024
RESIZE_WIDTH_MAX = 2048
SIZE_FACTOR_MIN = 0.5
SIZE_FACTOR_MAX = 0.9
DATASET_ASPECT = 1.5
_HALF = PATCH_SIZE // 2


def round_half_up(v: float) -> int:
    """Round with ties away from zero boundaries resolved upward."""
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class CropRect:
    """Relative sensor-plane crop window; (0, 1, 0, 1) is the uncropped sentinel."""

    x1: float
    x2: float
    y1: float
    y2: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x1 < self.x2 <= 1.0 and 0.0 <= self.y1 < self.y2 <= 1.0):
            raise ValueError(
                f"crop rectangle must satisfy 0 <= lo < hi <= 1 per axis, got {self}"
            )
        if abs((self.x2 - self.x1) - (self.y2 - self.y1)) > 1e-9:
            raise ValueError(f"crop rectangle must preserve aspect, got {self}")

    @classmethod
    def full(cls) -> "CropRect":
        return cls(0.0, 1.0, 0.0, 1.0)

    @property
    def is_full(self) -> bool:
        return (self.x1, self.x2, self.y1, self.y2) == (0.0, 1.0, 0.0, 1.0)

    @property
    def size_factor(self) -> float:
        return self.x2 - self.x1

    def to_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.x2, self.y1, self.y2)


@dataclass(frozen=True)
class PatchSet:
    """Sixteen square patches with their true cell labels.

    ``centers_px`` are the jittered centers in the image the patches were cut
    from; ``grid_slots`` give each patch's position in the extraction grid
    (row-major); ``labels`` give the sensor-plane cell each center lands in.
    """

    patches: tuple[ImageBuffer, ...]
    centers_px: tuple[tuple[float, float], ...]
    labels: tuple[int, ...]
    grid_slots: tuple[int, ...]

    def __post_init__(self) -> None:
        n = GRID_N * GRID_N
        if not (
            len(self.patches)
            == len(self.centers_px)
            == len(self.labels)
            == len(self.grid_slots)
            == n
        ):
            raise ValueError(f"a patch set holds exactly {n} patches")
        for p in self.patches:
            if p.width != PATCH_SIZE or p.height != PATCH_SIZE:
                raise ValueError(
                    f"patches must be {PATCH_SIZE}x{PATCH_SIZE}, got {p.width}x{p.height}"
                )
        lefts = [round_half_up(cx - _HALF) for cx, _ in self.centers_px]
        tops = [round_half_up(cy - _HALF) for _, cy in self.centers_px]
        for a in range(n):
            for b in range(a + 1, n):
                if (
                    abs(lefts[a] - lefts[b]) < PATCH_SIZE
                    and abs(tops[a] - tops[b]) < PATCH_SIZE
                ):
                    raise PipelineError(
                        f"patches {a} and {b} overlap (centers "
                        f"{self.centers_px[a]} and {self.centers_px[b]})"
                    )


def _coord_planes() -> tuple[np.ndarray, np.ndarray]:
    cx = (np.arange(THUMB_WIDTH, dtype=np.float32) + 0.5) / THUMB_WIDTH
    cy = (np.arange(THUMB_HEIGHT, dtype=np.float32) + 0.5) / THUMB_HEIGHT
    coord_x = np.broadcast_to(cx, (THUMB_HEIGHT, THUMB_WIDTH)).copy()
    coord_y = np.broadcast_to(cy[:, None], (THUMB_HEIGHT, THUMB_WIDTH)).copy()
    coord_x.flags.writeable = False
    coord_y.flags.writeable = False
    return coord_x, coord_y


_COORD_X, _COORD_Y = _coord_planes()


@dataclass(frozen=True)
class Thumbnail:
    """Fixed-size overview image plus normalized coordinate planes."""

    rgb: ImageBuffer

    def __post_init__(self) -> None:
        if self.rgb.width != THUMB_WIDTH or self.rgb.height != THUMB_HEIGHT:
            raise ValueError(
                f"thumbnail must be {THUMB_WIDTH}x{THUMB_HEIGHT}, "
                f"got {self.rgb.width}x{self.rgb.height}"
            )

    @property
    def coord_x(self) -> np.ndarray:
        return _COORD_X

    @property
    def coord_y(self) -> np.ndarray:
        return _COORD_Y

    def channels(self) -> np.ndarray:
        """(5, H, W) float32: RGB plus the two coordinate planes."""
        return np.concatenate(
            [self.rgb.planes, _COORD_X[None], _COORD_Y[None]], axis=0
        )


def sample_crop_rect(rng: np.random.Generator) -> CropRect:
    """Draw one edge-touching, aspect-preserving crop rectangle.

    Size factor f ~ U[0.5, 0.9]; pinned edge uniform over top/right/bottom/
    left (the pinned coordinate is exactly 0.0 or 1.0); the free axis offset
    ~ U[0, 1-f].
    """
    f = float(rng.uniform(SIZE_FACTOR_MIN, SIZE_FACTOR_MAX))
    edge = int(rng.integers(4))
    off = float(rng.uniform(0.0, 1.0 - f))
    if edge == 0:  # top
        return CropRect(off, off + f, 0.0, f)
    if edge == 1:  # right
        return CropRect(1.0 - f, 1.0, off, off + f)
    if edge == 2:  # bottom
        return CropRect(off, off + f, 1.0 - f, 1.0)
    return CropRect(0.0, f, off, off + f)  # left


def crop_pixel_bounds(
    rect: CropRect, width: int, height: int
) -> tuple[int, int, int, int]:
    """Pixel region (x_start, x_stop, y_start, y_stop) for a rect, half-up rounded."""
    x_start = round_half_up(rect.x1 * width)
    x_stop = round_half_up(rect.x2 * width)
    y_start = round_half_up(rect.y1 * height)
    y_stop = round_half_up(rect.y2 * height)
    if x_stop <= x_start or y_stop <= y_start:
        raise ValueError(
            f"crop rectangle {rect.to_tuple()} rounds to a degenerate region "
            f"on a {width}x{height} image"
        )
    return x_start, x_stop, y_start, y_stop


def apply_crop(img: ImageBuffer, rect: CropRect) -> ImageBuffer:
    """Cut the rect's pixel region out of the image, with no resampling."""
    if rect.is_full:
        return img
    x0, x1, y0, y1 = crop_pixel_bounds(rect, img.width, img.height)
    return ImageBuffer(np.ascontiguousarray(img.planes[:, y0:y1, x0:x1]))


def _grid_jitters(rng: np.random.Generator) -> tuple[tuple[int, int], ...]:
    return tuple(
        (int(rng.integers(-JITTER_MAX, JITTER_MAX + 1)),
         int(rng.integers(-JITTER_MAX, JITTER_MAX + 1)))
        for _ in range(GRID_N * GRID_N)
    )


def _centers_from_jitters(
    width: int, height: int, jitters: tuple[tuple[int, int], ...]
) -> tuple[tuple[float, float], ...]:
    centers = []
    for k, (jx, jy) in enumerate(jitters):
        i, j = k % GRID_N, k // GRID_N
        cx = (i + 0.5) * width / GRID_N + jx
        cy = (j + 0.5) * height / GRID_N + jy
        cx = min(max(cx, float(_HALF)), float(width - _HALF))
        cy = min(max(cy, float(_HALF)), float(height - _HALF))
        centers.append((cx, cy))
    return tuple(centers)


def patch_grid_centers(
    width: int, height: int, rng: np.random.Generator, jitter: bool = True
) -> tuple[tuple[float, float], ...]:
    """Jittered centers of the 4x4 extraction grid, clamped to keep patches inside.

    ``jitter=False`` skips the random draws entirely and returns the nominal
    grid (useful for geometry checks).
    """
    if width < RESIZE_WIDTH_MIN:
        raise ValueError(f"grid extraction requires width >= {RESIZE_WIDTH_MIN}, got {width}")
    if height < PATCH_SIZE + 2 * JITTER_MAX:
        raise ValueError(
            f"grid extraction requires height >= {PATCH_SIZE + 2 * JITTER_MAX}, got {height}"
        )
    jitters = _grid_jitters(rng) if jitter else tuple((0, 0) for _ in range(16))
    return _centers_from_jitters(width, height, jitters)


def patch_label(
    center_px: tuple[float, float], dims: tuple[int, int], rect: CropRect
) -> int:
    """Sensor-plane cell index (0..15) of a patch center.

    The center is mapped from the (possibly cropped and resized) image back
    to absolute sensor coordinates through the rect, then binned into the
    4x4 cell grid; u = 1 falls into the last column by the clamp.
    """
    cx, cy = center_px
    width, height = dims
    u = rect.x1 + (cx / width) * (rect.x2 - rect.x1)
    v = rect.y1 + (cy / height) * (rect.y2 - rect.y1)
    i = min(int(math.floor(GRID_N * u)), GRID_N - 1)
    j = min(int(math.floor(GRID_N * v)), GRID_N - 1)
    return GRID_N * j + i


def _draw_width(rng: np.random.Generator) -> int:
    return int(rng.integers(RESIZE_WIDTH_MIN, RESIZE_WIDTH_MAX + 1))


def _draw_method(rng: np.random.Generator) -> InterpMethod:
    return METHOD_ORDER[int(rng.integers(len(METHOD_ORDER)))]


def pre_patch_resize(img: ImageBuffer, rng: np.random.Generator) -> ImageBuffer:
    """Randomly re-scale before patch extraction, keeping the aspect ratio."""
    width = _draw_width(rng)
    method = _draw_method(rng)
    height = round_half_up(width * img.height / img.width)
    return resize(img, width, max(height, 1), method)


def _chain_height_bounds(width: int) -> tuple[int, int]:
    # H' uniform over integers in [0.8*W'/A, 1.2*W'/A] with A = 1.5; the
    # bounds are the exact rationals 8W/15 and 4W/5.
    lo = -((-8 * width) // 15)
    hi = (4 * width) // 5
    return lo, hi


def _draw_chain_step(rng: np.random.Generator) -> tuple[int, int, InterpMethod]:
    width = _draw_width(rng)
    lo, hi = _chain_height_bounds(width)
    height = int(rng.integers(lo, hi + 1))
    return width, height, _draw_method(rng)


def fuzz_resize_chain(img: ImageBuffer, rng: np.random.Generator) -> ImageBuffer:
    """Three successive random resizes that scrub resolution provenance."""
    out = img
    for _ in range(3):
        width, height, method = _draw_chain_step(rng)
        out = resize(out, width, height, method)
    return out


def make_thumbnail(img: ImageBuffer, rng: np.random.Generator) -> Thumbnail:
    """Fuzz-chain the image, downscale to the fixed thumbnail size, add coords."""
    out = fuzz_resize_chain(img, rng)
    out = resize(out, THUMB_WIDTH, THUMB_HEIGHT, _draw_method(rng))
    return Thumbnail(rgb=out)


@dataclass(frozen=True)
class SamplePlan:
    """Every random draw and derived quantity for one sample, pixel-free."""

    source_width: int
    source_height: int
    crop_flag: bool
    rect: CropRect
    crop_px: tuple[int, int, int, int]  # x_start, x_stop, y_start, y_stop
    pre_patch_size: tuple[int, int]  # width, height
    pre_patch_method: InterpMethod
    jitters: tuple[tuple[int, int], ...]
    centers_px: tuple[tuple[float, float], ...]
    labels: tuple[int, ...]
    grid_slots: tuple[int, ...]
    chain: tuple[tuple[int, int, InterpMethod], ...]
    thumb_method: InterpMethod


@dataclass(frozen=True)
class SampleRecord:
    """One fully prepared sample: patches, thumbnail, and ground truth."""

    crop_flag: bool
    rect: CropRect
    profile: AberrationProfile
    patch_set: PatchSet
    thumbnail: Thumbnail
    plan: SamplePlan
    sample_seed: int | None = None

    @property
    def size_factor(self) -> float:
        return self.rect.size_factor


def plan_sample(
    width: int, height: int, crop_flag: bool, rng: np.random.Generator
) -> SamplePlan:
    """Run the full random protocol for one sample without touching pixels."""
    rect = sample_crop_rect(rng) if crop_flag else CropRect.full()
    if rect.is_full:
        crop_px = (0, width, 0, height)
    else:
        crop_px = crop_pixel_bounds(rect, width, height)
    cw = crop_px[1] - crop_px[0]
    ch = crop_px[3] - crop_px[2]

    pp_width = _draw_width(rng)
    pp_method = _draw_method(rng)
    pp_height = max(round_half_up(pp_width * ch / cw), 1)

    jitters = _grid_jitters(rng)
    centers = _centers_from_jitters(pp_width, pp_height, jitters)
    labels = tuple(
        patch_label(c, (pp_width, pp_height), rect) for c in centers
    )
    slots = tuple(range(GRID_N * GRID_N))

    chain = tuple(_draw_chain_step(rng) for _ in range(3))
    thumb_method = _draw_method(rng)

    return SamplePlan(
        source_width=width,
        source_height=height,
        crop_flag=crop_flag,
        rect=rect,
        crop_px=crop_px,
        pre_patch_size=(pp_width, pp_height),
        pre_patch_method=pp_method,
        jitters=jitters,
        centers_px=centers,
        labels=labels,
        grid_slots=slots,
        chain=chain,
        thumb_method=thumb_method,
    )


def _extract_patch(img: ImageBuffer, center: tuple[float, float]) -> ImageBuffer:
    left = round_half_up(center[0] - _HALF)
    top = round_half_up(center[1] - _HALF)
    return ImageBuffer(
        np.ascontiguousarray(
            img.planes[:, top : top + PATCH_SIZE, left : left + PATCH_SIZE]
        )
    )


def execute_plan(
    img: ImageBuffer,
    plan: SamplePlan,
    profile: AberrationProfile,
    sample_seed: int | None = None,
) -> SampleRecord:
    """Render a plan into pixels: lens profile, crop, patches, thumbnail."""
    if img.width != plan.source_width or img.height != plan.source_height:
        raise PipelineError(
            f"plan was made for {plan.source_width}x{plan.source_height}, "
            f"image is {img.width}x{img.height}"
        )
    staged = apply_profile(img, profile)
    x0, x1, y0, y1 = plan.crop_px
    if (x0, x1, y0, y1) == (0, img.width, 0, img.height):
        cropped = staged
    else:
        cropped = ImageBuffer(np.ascontiguousarray(staged.planes[:, y0:y1, x0:x1]))

    pp_w, pp_h = plan.pre_patch_size
    resized = resize(cropped, pp_w, pp_h, plan.pre_patch_method)
    patches = tuple(_extract_patch(resized, c) for c in plan.centers_px)
    patch_set = PatchSet(
        patches=patches,
        centers_px=plan.centers_px,
        labels=plan.labels,
        grid_slots=plan.grid_slots,
    )

    out = cropped
    for width, height, method in plan.chain:
        out = resize(out, width, height, method)
    thumb = Thumbnail(rgb=resize(out, THUMB_WIDTH, THUMB_HEIGHT, plan.thumb_method))

    return SampleRecord(
        crop_flag=plan.crop_flag,
        rect=plan.rect,
        profile=profile,
        patch_set=patch_set,
        thumbnail=thumb,
        plan=plan,
        sample_seed=sample_seed,
    )


def prepare_sample(
    img: ImageBuffer,
    crop_flag: bool,
    profile: AberrationProfile,
    rng: np.random.Generator,
    sample_seed: int | None = None,
) -> SampleRecord:
    """Plan and execute one sample with the shared draw protocol."""
    plan = plan_sample(img.width, img.height, crop_flag, rng)
    return execute_plan(img, plan, profile, sample_seed)
