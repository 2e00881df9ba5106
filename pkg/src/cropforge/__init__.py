"""cropforge: deterministic crop-detection dataset engine and lens simulator."""

from .buffer import ImageBuffer, InterpMethod
from .codecs import decode_file, decode_image, encode_image
from .crops import (
    CropRect,
    PatchSet,
    SamplePlan,
    SampleRecord,
    Thumbnail,
    apply_crop,
    fuzz_resize_chain,
    make_thumbnail,
    patch_grid_centers,
    patch_label,
    plan_sample,
    pre_patch_resize,
    prepare_sample,
    sample_crop_rect,
)
from .dataset import (
    DatasetManifest,
    ManifestEntry,
    ScanConfig,
    assemble_pretext_batches,
    assign_splits,
    generate,
    scan_and_filter,
    stats,
    sweep,
)
from .errors import CropforgeError, DecodeError, PipelineError, UnsupportedFormatError
from .kernels import BACKEND as KERNEL_BACKEND
from .lens import (
    DEFAULT_VIGNETTE_PARAMS,
    AberrationProfile,
    apply_profile,
    apply_radial_distortion,
    apply_saturation,
    apply_tca,
    apply_vignetting,
    vignette_gain,
)
from .resample import luma, resize, warp
from .seeds import derive_seed, make_rng

__version__ = "0.1.0"

__all__ = [
    "ImageBuffer",
    "InterpMethod",
    "decode_file",
    "decode_image",
    "encode_image",
    "CropRect",
    "PatchSet",
    "SamplePlan",
    "SampleRecord",
    "Thumbnail",
    "apply_crop",
    "fuzz_resize_chain",
    "make_thumbnail",
    "patch_grid_centers",
    "patch_label",
    "plan_sample",
    "pre_patch_resize",
    "prepare_sample",
    "sample_crop_rect",
    "DatasetManifest",
    "ManifestEntry",
    "ScanConfig",
    "assemble_pretext_batches",
    "assign_splits",
    "generate",
    "scan_and_filter",
    "stats",
    "sweep",
    "CropforgeError",
    "DecodeError",
    "PipelineError",
    "UnsupportedFormatError",
    "KERNEL_BACKEND",
    "DEFAULT_VIGNETTE_PARAMS",
    "AberrationProfile",
    "apply_profile",
    "apply_radial_distortion",
    "apply_saturation",
    "apply_tca",
    "apply_vignetting",
    "vignette_gain",
    "luma",
    "resize",
    "warp",
    "derive_seed",
    "make_rng",
    "__version__",
]
