"""Dataset engine: corpus ingestion, split assignment, parallel generation,
sweep variants, pretext batch assembly, and dataset statistics.

Determinism model: every sample's entire random protocol is driven by a
per-sample seed derived from (master seed, source path), so generation is
embarrassingly parallel and byte-identical for any worker count. The
manifest is sorted by source path and written by a single writer; record ids
are manifest positions.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .buffer import ImageBuffer, InterpMethod
from .codecs import decode_file
from .crops import prepare_sample, round_half_up
from .errors import CropforgeError, DecodeError, PipelineError
from .lens import AberrationProfile
from .records import (
    SAMPLES_SUBDIR,
    patch_name,
    read_meta,
    record_complete,
    record_dir_name,
    write_record,
)
from .resample import resize
from .seeds import derive_seed, make_rng

__all__ = [
    "ScanConfig",
    "ManifestEntry",
    "DatasetManifest",
    "scan_and_filter",
    "assign_splits",
    "generate",
    "sweep",
    "SWEEP_AXES",
    "assemble_pretext_batches",
    "stats",
]

log = logging.getLogger("cropforge")

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
MAX_DIMENSION = 2048
MIN_WIDTH = 1024
TARGET_ASPECT = 1.5
ASPECT_TOLERANCE = 0.002
FAILURE_BUDGET = 0.01
SPLIT_NAMES = ("train", "val", "test")
ROTATIONS = ("none", "left", "right")


@dataclass(frozen=True)
class ScanConfig:
    """Ingestion constraints; the defaults define the standard corpus."""

    aspect: float = TARGET_ASPECT
    aspect_tolerance: float = ASPECT_TOLERANCE
    max_dimension: int = MAX_DIMENSION
    min_width: int = MIN_WIDTH

    def to_dict(self) -> dict:
        return {
            "aspect": self.aspect,
            "aspect_tolerance": self.aspect_tolerance,
            "max_dimension": self.max_dimension,
            "min_width": self.min_width,
        }


@dataclass(frozen=True)
class ManifestEntry:
    """One accepted source image, after ingest normalization."""

    source_path: str  # POSIX-style path relative to the input root
    width: int  # post-ingest dimensions
    height: int
    rotated: str  # none | left | right
    split: str | None = None
    crop_assigned: bool | None = None
    sample_seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "source_path": self.source_path,
            "width": self.width,
            "height": self.height,
            "rotated": self.rotated,
            "split": self.split,
            "crop_assigned": self.crop_assigned,
            "sample_seed": self.sample_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(
            source_path=d["source_path"],
            width=int(d["width"]),
            height=int(d["height"]),
            rotated=d["rotated"],
            split=d.get("split"),
            crop_assigned=d.get("crop_assigned"),
            sample_seed=d.get("sample_seed"),
        )


@dataclass(frozen=True)
class DatasetManifest:
    """Sorted entry list plus the configuration that produced it."""

    entries: tuple[ManifestEntry, ...]
    master_seed: int
    config_digest: str
    input_root: str

    def __post_init__(self) -> None:
        paths = [e.source_path for e in self.entries]
        if paths != sorted(paths):
            raise ValueError("manifest entries must be sorted by source_path")
        if len(set(paths)) != len(paths):
            raise ValueError("manifest entries must have unique source paths")

    def to_jsonl(self) -> str:
        header = {
            "master_seed": self.master_seed,
            "config_digest": self.config_digest,
            "input_root": self.input_root,
        }
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps(e.to_dict(), sort_keys=True) for e in self.entries]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "DatasetManifest":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise CropforgeError("manifest is empty")
        header = json.loads(lines[0])
        entries = tuple(ManifestEntry.from_dict(json.loads(ln)) for ln in lines[1:])
        return cls(
            entries=entries,
            master_seed=int(header["master_seed"]),
            config_digest=header["config_digest"],
            input_root=header.get("input_root", "."),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def config_digest_of(config: ScanConfig, master_seed: int) -> str:
    payload = json.dumps(
        {"master_seed": master_seed, "scan": config.to_dict()}, sort_keys=True
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _rotate(img: ImageBuffer, direction: str) -> ImageBuffer:
    if direction == "none":
        return img
    k = 1 if direction == "left" else -1
    return ImageBuffer(np.ascontiguousarray(np.rot90(img.planes, k=k, axes=(1, 2))))


def _ingest_dims(width: int, height: int, max_dimension: int) -> tuple[int, int]:
    """Post-downscale dimensions for a landscape image."""
    if max(width, height) <= max_dimension:
        return width, height
    new_w = max_dimension
    new_h = round_half_up(max_dimension * height / width)
    return new_w, max(new_h, 1)


def ingest_image(img: ImageBuffer, rotated: str, max_dimension: int = MAX_DIMENSION) -> ImageBuffer:
    """Apply the ingest normalization recorded in a manifest entry."""
    img = _rotate(img, rotated)
    w, h = _ingest_dims(img.width, img.height, max_dimension)
    if (w, h) != (img.width, img.height):
        img = resize(img, w, h, InterpMethod.LINEAR)
    return img


def _scan_one(
    img: ImageBuffer, relpath: str, master_seed: int, config: ScanConfig
) -> ManifestEntry | None:
    """Classify one decoded image; None means rejected (reason logged)."""
    rotated = "none"
    if img.height > img.width:
        rng = make_rng(derive_seed(master_seed, "ingest", relpath))
        rotated = "left" if int(rng.integers(2)) == 0 else "right"
        img_w, img_h = img.height, img.width  # dimensions after rotation
    else:
        img_w, img_h = img.width, img.height
    aspect = img_w / img_h
    if abs(aspect - config.aspect) > config.aspect_tolerance:
        log.info("reject %s: aspect %.4f outside %.1f±%.3f", relpath, aspect,
                 config.aspect, config.aspect_tolerance)
        return None
    if img_w < config.min_width:
        log.info("reject %s: width %d < %d", relpath, img_w, config.min_width)
        return None
    w, h = _ingest_dims(img_w, img_h, config.max_dimension)
    return ManifestEntry(
        source_path=relpath, width=w, height=h, rotated=rotated
    )


def scan_and_filter(
    input_dir: str | Path, master_seed: int = 0, config: ScanConfig = ScanConfig()
) -> DatasetManifest:
    """Walk a corpus directory and build the manifest of accepted sources.

    Portrait images are rotated to landscape (direction drawn from a
    per-path seeded generator); aspect must match 1.5 within the tolerance;
    images narrower than the minimum width are rejected; oversized images
    are marked for downscaling to the maximum dimension. Unreadable files
    are skipped with a logged reason.
    """
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise CropforgeError(f"input directory not found: {input_dir}")
    relpaths = sorted(
        p.relative_to(input_dir).as_posix()
        for p in input_dir.rglob("*")
        if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )
    entries = []
    for relpath in relpaths:
        try:
            img = decode_file(input_dir / relpath)
        except (DecodeError, OSError) as exc:
            log.warning("skip unreadable %s: %s", relpath, exc)
            continue
        entry = _scan_one(img, relpath, master_seed, config)
        if entry is not None:
            entries.append(entry)
    if not entries:
        raise CropforgeError(f"no usable images found under {input_dir}")
    return DatasetManifest(
        entries=tuple(entries),
        master_seed=master_seed,
        config_digest=config_digest_of(config, master_seed),
        input_root=str(input_dir),
    )


def assign_splits(manifest: DatasetManifest, master_seed: int | None = None) -> DatasetManifest:
    """Assign train/val/test splits and stratified crop flags, seeded.

    A seeded shuffle orders the entries, the first 90% become train and the
    next two 5% blocks val and test (5% counts are half-up rounded); within
    each split a second seeded shuffle marks exactly floor(N_split/2)
    entries for cropping.
    """
    if master_seed is None:
        master_seed = manifest.master_seed
    n = len(manifest.entries)
    if n == 0:
        raise CropforgeError("cannot assign splits on an empty manifest")
    order = make_rng(derive_seed(master_seed, "splits")).permutation(n)
    n_val = round_half_up(0.05 * n)
    n_test = round_half_up(0.05 * n)
    n_train = n - n_val - n_test
    if n_train <= 0:
        raise CropforgeError(f"corpus of {n} images is too small to split")
    split_of = {}
    for pos, idx in enumerate(order):
        if pos < n_train:
            split_of[int(idx)] = "train"
        elif pos < n_train + n_val:
            split_of[int(idx)] = "val"
        else:
            split_of[int(idx)] = "test"

    crop_of = {}
    for split in SPLIT_NAMES:
        members = [i for i in range(n) if split_of[i] == split]
        rng = make_rng(derive_seed(master_seed, "cropflags", split))
        perm = rng.permutation(len(members))
        n_crop = len(members) // 2
        chosen = {members[int(perm[j])] for j in range(n_crop)}
        for i in members:
            crop_of[i] = i in chosen

    entries = tuple(
        replace(
            e,
            split=split_of[i],
            crop_assigned=crop_of[i],
            sample_seed=derive_seed(master_seed, "sample", e.source_path),
        )
        for i, e in enumerate(manifest.entries)
    )
    return replace(manifest, entries=entries, master_seed=master_seed)


def _load_source(entry: ManifestEntry, input_root: Path) -> ImageBuffer:
    img = decode_file(input_root / entry.source_path)
    img = ingest_image(img, entry.rotated)
    if (img.width, img.height) != (entry.width, entry.height):
        raise PipelineError(
            f"{entry.source_path}: ingest produced {img.width}x{img.height}, "
            f"manifest recorded {entry.width}x{entry.height} (source changed?)"
        )
    return img


def _generate_one(
    entry_dict: dict,
    record_id: int,
    input_root: str,
    out_dir: str,
    profile_dict: dict,
    bit_depth: int,
    debug_provenance: bool,
) -> dict:
    """Worker task: build and write one record. Returns a result summary."""
    entry = ManifestEntry.from_dict(entry_dict)
    try:
        img = _load_source(entry, Path(input_root))
        record = prepare_sample(
            img,
            bool(entry.crop_assigned),
            AberrationProfile.from_dict(profile_dict),
            make_rng(entry.sample_seed),
            sample_seed=entry.sample_seed,
        )
        write_record(out_dir, record_id, record, bit_depth, debug_provenance)
        return {
            "record_id": record_id,
            "ok": True,
            "split": entry.split,
            "cropped": bool(entry.crop_assigned),
            "labels": list(record.patch_set.labels),
            "size_factor": record.rect.size_factor,
        }
    except Exception as exc:  # per-sample failure: reported, counted upstream
        return {
            "record_id": record_id,
            "ok": False,
            "split": entry.split,
            "error": f"{type(exc).__name__}: {exc}",
            "source_path": entry.source_path,
        }


def _merge_summary(
    manifest: DatasetManifest, profile: AberrationProfile, bit_depth: int, results: list[dict]
) -> dict:
    by_id = sorted(results, key=lambda r: r["record_id"])
    label_hist_cropped = [0] * 16
    label_hist_uncropped = [0] * 16
    split_counts = {s: 0 for s in SPLIT_NAMES}
    crop_counts = {s: 0 for s in SPLIT_NAMES}
    failures = []
    for r in by_id:
        if not r["ok"]:
            failures.append({"record_id": r["record_id"],
                             "source_path": r["source_path"], "error": r["error"]})
            continue
        split_counts[r["split"]] += 1
        hist = label_hist_cropped if r["cropped"] else label_hist_uncropped
        if r["cropped"]:
            crop_counts[r["split"]] += 1
        for lbl in r["labels"]:
            hist[lbl] += 1
    n_ok = sum(split_counts.values())
    return {
        "master_seed": manifest.master_seed,
        "config_digest": manifest.config_digest,
        "aberration_profile": profile.to_dict(),
        "bit_depth": bit_depth,
        "samples": n_ok,
        "split_counts": split_counts,
        "crop_counts": crop_counts,
        "label_histogram_cropped": label_hist_cropped,
        "label_histogram_uncropped": label_hist_uncropped,
        "failures": failures,
    }


def generate(
    manifest: DatasetManifest,
    profile: AberrationProfile,
    out_dir: str | Path,
    *,
    input_root: str | Path | None = None,
    workers: int = 1,
    bit_depth: int = 8,
    debug_provenance: bool = False,
    resume: bool = False,
) -> dict:
    """Render every manifest entry into an on-disk record; returns the summary.

    Output bytes depend only on (manifest, profile, bit depth, provenance
    flag) — never on the worker count or completion order. Per-sample
    failures are logged and tolerated up to 1% of the corpus, then the run
    aborts.
    """
    for entry in manifest.entries:
        if entry.split is None or entry.crop_assigned is None or entry.sample_seed is None:
            raise CropforgeError(
                f"manifest entry {entry.source_path} has no split assignment; "
                f"run assign_splits first"
            )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    input_root = Path(input_root) if input_root is not None else Path(manifest.input_root)

    n = len(manifest.entries)
    budget = max(int(math.floor(FAILURE_BUDGET * n)), 0)
    tasks = []
    results: list[dict] = []
    for record_id, entry in enumerate(manifest.entries):
        rec_dir = out_dir / SAMPLES_SUBDIR / record_dir_name(record_id)
        if resume and record_complete(rec_dir):
            meta = read_meta(rec_dir)
            results.append({
                "record_id": record_id,
                "ok": True,
                "split": entry.split,
                "cropped": meta["cropped"],
                "labels": meta["patch_labels"],
                "size_factor": meta["size_factor"],
            })
            continue
        tasks.append((entry, record_id))

    def handle(res: dict) -> None:
        results.append(res)
        if not res["ok"]:
            log.error("sample %06d failed: %s (%s)", res["record_id"],
                      res["error"], res["source_path"])
            n_failed = sum(1 for r in results if not r["ok"])
            if n_failed > budget:
                raise PipelineError(
                    f"{n_failed} of {n} samples failed, exceeding the "
                    f"{FAILURE_BUDGET:.0%} failure budget"
                )

    profile_dict = profile.to_dict()
    if workers <= 1:
        for entry, record_id in tasks:
            handle(_generate_one(entry.to_dict(), record_id, str(input_root),
                                 str(out_dir), profile_dict, bit_depth,
                                 debug_provenance))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_generate_one, entry.to_dict(), record_id,
                            str(input_root), str(out_dir), profile_dict,
                            bit_depth, debug_provenance)
                for entry, record_id in tasks
            ]
            for fut in as_completed(futures):
                handle(fut.result())

    summary = _merge_summary(manifest, profile, bit_depth, results)
    manifest.save(out_dir / "manifest.jsonl")
    tmp = out_dir / "summary.json.tmp"
    tmp.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n",
                   encoding="utf-8")
    tmp.replace(out_dir / "summary.json")
    return summary


SWEEP_AXES = ("tca_r", "tca_g", "tca_b", "vignette", "saturation", "distortion")


def profile_for_axis(axis: str, strength: float) -> AberrationProfile:
    """Single-aberration profile for one sweep point (argument-checked).

    Strength 0 is the neutral profile on the tca_*, vignette, and distortion
    axes. For the tca axes the strength is a scale *offset*: the channel is
    magnified by 1 + strength, so negative strengths shrink it inward. The
    saturation axis takes the saturation factor directly (neutral at 1).
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    try:
        if axis == "tca_r":
            return AberrationProfile(tca_scale=(1.0 + strength, 1.0, 1.0))
        if axis == "tca_g":
            return AberrationProfile(tca_scale=(1.0, 1.0 + strength, 1.0))
        if axis == "tca_b":
            return AberrationProfile(tca_scale=(1.0, 1.0, 1.0 + strength))
        if axis == "vignette":
            return AberrationProfile(vignette_strength=strength)
        if axis == "saturation":
            return AberrationProfile(saturation=strength)
        return AberrationProfile(distortion_k1=strength)
    except ValueError as exc:
        raise ValueError(f"sweep strength {strength} out of range for {axis}: {exc}") from exc


def sweep_dir_name(axis: str, strength: float) -> str:
    return f"{axis}_{format(float(strength), 'g')}"


def sweep(
    manifest: DatasetManifest,
    axis: str,
    strengths: list[float],
    out_root: str | Path,
    **generate_kwargs,
) -> list[Path]:
    """Generate one dataset per strength, varying only the aberration.

    All sweeps share the manifest (splits, crop flags, per-sample seeds), so
    paired datasets differ only in pixel content and the profile recorded in
    each meta document.
    """
    profiles = [profile_for_axis(axis, s) for s in strengths]
    out_root = Path(out_root)
    out_dirs = []
    for strength, profile in zip(strengths, profiles):
        out_dir = out_root / sweep_dir_name(axis, strength)
        generate(manifest, profile, out_dir, **generate_kwargs)
        out_dirs.append(out_dir)
    return out_dirs


def assemble_pretext_batches(
    dataset_dir: str | Path, batch_size: int, split: str | None = None,
    manifest: DatasetManifest | None = None,
) -> dict:
    """Cyclically shifted patch batches: every batch sees all 16 slots equally.

    Batch t takes, from its b-th sample, the patch at grid slot
    (b + t) mod 16, so each slot appears exactly batch_size/16 times per
    batch. Samples are taken in record order; a trailing group smaller than
    the batch size is dropped.
    """
    if batch_size <= 0 or batch_size % 16 != 0:
        raise ValueError(f"batch size must be a positive multiple of 16, got {batch_size}")
    if split is not None and split not in SPLIT_NAMES:
        raise ValueError(f"split must be one of {SPLIT_NAMES}, got {split!r}")
    dataset_dir = Path(dataset_dir)
    if manifest is None:
        manifest = DatasetManifest.load(dataset_dir / "manifest.jsonl")
    wanted_ids = [
        i for i, e in enumerate(manifest.entries)
        if split is None or e.split == split
    ]
    batches = []
    n_batches = len(wanted_ids) // batch_size
    for t in range(n_batches):
        group = wanted_ids[t * batch_size : (t + 1) * batch_size]
        items = []
        for b, record_id in enumerate(group):
            slot = (b + t) % 16
            rec_rel = f"{SAMPLES_SUBDIR}/{record_dir_name(record_id)}"
            meta = read_meta(dataset_dir / rec_rel)
            items.append({
                "record_id": record_id,
                "slot": slot,
                "label": meta["patch_labels"][slot],
                "patch_path": f"{rec_rel}/{patch_name(slot)}",
            })
        batches.append(items)
    return {"batch_size": batch_size, "split": split, "batches": batches}


def _pinned_edge(rect: list[float]) -> str:
    x1, x2, y1, y2 = rect
    if y1 == 0.0:
        return "top"
    if x2 == 1.0:
        return "right"
    if y2 == 1.0:
        return "bottom"
    if x1 == 0.0:
        return "left"
    return "none"


def stats(dataset_dir: str | Path) -> dict:
    """Summarize a generated dataset by reading every record's meta document."""
    dataset_dir = Path(dataset_dir)
    samples_dir = dataset_dir / SAMPLES_SUBDIR
    if not samples_dir.is_dir():
        raise CropforgeError(f"no {SAMPLES_SUBDIR}/ directory under {dataset_dir}")
    rec_dirs = sorted(p for p in samples_dir.iterdir() if p.is_dir())
    if not rec_dirs:
        raise CropforgeError(f"no records under {samples_dir}")
    n = 0
    n_cropped = 0
    label_hist = [0] * 16
    edge_counts = {"top": 0, "right": 0, "bottom": 0, "left": 0}
    f_values = []
    corrupt = []
    for rec_dir in rec_dirs:
        try:
            meta = read_meta(rec_dir)
            labels = meta["patch_labels"]
            rect = meta["crop_rect"]
            cropped = bool(meta["cropped"])
        except (CropforgeError, KeyError, TypeError) as exc:
            corrupt.append({"record": rec_dir.name, "error": str(exc)})
            continue
        n += 1
        for lbl in labels:
            label_hist[lbl] += 1
        if cropped:
            n_cropped += 1
            f_values.append(meta["size_factor"])
            edge = _pinned_edge(rect)
            if edge != "none":
                edge_counts[edge] += 1
    if n == 0:
        raise CropforgeError(f"all {len(rec_dirs)} records under {samples_dir} are corrupt")
    hist_edges = np.linspace(0.5, 0.9, 9)
    f_hist, _ = np.histogram(np.array(f_values, dtype=np.float64), bins=hist_edges)
    return {
        "samples": n,
        "cropped": n_cropped,
        "crop_rate": n_cropped / n,
        "size_factor_histogram": {
            "bin_edges": [float(e) for e in hist_edges],
            "counts": [int(c) for c in f_hist],
        },
        "label_histogram": label_hist,
        "pinned_edge_counts": edge_counts,
        "corrupt_records": corrupt,
    }
