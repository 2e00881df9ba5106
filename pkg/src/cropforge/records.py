"""On-disk sample records: PNGs plus a JSON meta document per sample.

Layout per record: ``samples/<id>/thumb.png``, ``patch_00.png`` …
``patch_15.png`` (indexed by grid slot), and ``meta.json``. The meta file is
written last so its presence marks a complete record; every file is written
to a temporary name and renamed, keeping partially written records invisible.
Floats are serialized with Python's shortest round-trip decimal repr, which
is lossless (the decimal digits reproduce the exact stored double).
"""

from __future__ import annotations

import json
from pathlib import Path

from .buffer import ImageBuffer
from .codecs import decode_file, write_image
from .crops import SampleRecord
from .errors import CropforgeError
from .lens import AberrationProfile

__all__ = [
    "record_dir_name",
    "write_record",
    "read_meta",
    "record_complete",
    "load_patches",
    "load_thumbnail",
]

SAMPLES_SUBDIR = "samples"
META_NAME = "meta.json"
THUMB_NAME = "thumb.png"


def record_dir_name(record_id: int) -> str:
    return f"{record_id:06d}"


def patch_name(slot: int) -> str:
    return f"patch_{slot:02d}.png"


def _meta_document(
    record: SampleRecord, record_id: int, bit_depth: int, debug_provenance: bool
) -> dict:
    meta = {
        "record_id": record_id,
        "cropped": record.crop_flag,
        "crop_rect": list(record.rect.to_tuple()),
        "size_factor": record.rect.size_factor,
        "patch_labels": list(record.patch_set.labels),
        "grid_slots": list(record.patch_set.grid_slots),
        "patch_centers_px": [list(c) for c in record.patch_set.centers_px],
        "patch_frame_size": list(record.plan.pre_patch_size),
        "aberration_profile": record.profile.to_dict(),
        "sample_seed": record.sample_seed,
        "bit_depth": bit_depth,
    }
    if debug_provenance:
        meta["provenance"] = {
            "source_width": record.plan.source_width,
            "source_height": record.plan.source_height,
            "crop_px": list(record.plan.crop_px),
            "pre_patch_method": record.plan.pre_patch_method.name,
            "jitters": [list(j) for j in record.plan.jitters],
            "thumb_chain": [
                [w, h, m.name] for (w, h, m) in record.plan.chain
            ],
            "thumb_method": record.plan.thumb_method.name,
        }
    return meta


def write_record(
    dataset_dir: str | Path,
    record_id: int,
    record: SampleRecord,
    bit_depth: int = 8,
    debug_provenance: bool = False,
) -> Path:
    """Serialize one sample; returns the record directory."""
    rec_dir = Path(dataset_dir) / SAMPLES_SUBDIR / record_dir_name(record_id)
    rec_dir.mkdir(parents=True, exist_ok=True)
    for slot, patch in zip(record.patch_set.grid_slots, record.patch_set.patches):
        write_image(rec_dir / patch_name(slot), patch, bit_depth)
    write_image(rec_dir / THUMB_NAME, record.thumbnail.rgb, bit_depth)
    meta = _meta_document(record, record_id, bit_depth, debug_provenance)
    payload = json.dumps(meta, sort_keys=True, indent=2) + "\n"
    tmp = rec_dir / (META_NAME + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    tmp.replace(rec_dir / META_NAME)
    return rec_dir


def record_complete(rec_dir: str | Path) -> bool:
    return (Path(rec_dir) / META_NAME).is_file()


def read_meta(rec_dir: str | Path) -> dict:
    path = Path(rec_dir) / META_NAME
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CropforgeError(f"unreadable record meta {path}: {exc}") from exc


def load_patches(rec_dir: str | Path) -> list[ImageBuffer]:
    """The 16 patches of a record, in grid-slot order."""
    rec_dir = Path(rec_dir)
    return [decode_file(rec_dir / patch_name(slot)) for slot in range(16)]


def load_thumbnail(rec_dir: str | Path) -> ImageBuffer:
    return decode_file(Path(rec_dir) / THUMB_NAME)


def profile_of(meta: dict) -> AberrationProfile:
    return AberrationProfile.from_dict(meta["aberration_profile"])
