"""Reading cropforge record directories, manifests, and pretext batch files.

A dataset directory holds ``manifest.jsonl`` (header line plus one entry per
record, in record-id order) and ``samples/NNNNNN/`` directories each with 16
``patch_SS.png`` files (96x96, indexed by grid slot), a 224x149 ``thumb.png``,
and ``meta.json`` carrying labels and the crop rectangle. Two coordinate
channels are appended to the thumbnail here: ``(col + 0.5) / 224`` and
``(row + 0.5) / 149``, pure functions of position.

Online augmentation re-randomizes the patch pixel pitch each epoch by taking
a random sub-window of the 96px patch frame and resampling it back to 96px —
a per-(seed, epoch, sample) deterministic stand-in for regenerating the
records with fresh resize widths and grid jitter. Thumbnails are left as
stored: they are whole-image downscales whose content does not depend on the
randomized intermediate width.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import Tensor
from torch.utils.data import DataLoader, Dataset

from .config import GRID_CELLS, PATCH_SIZE, THUMB_HEIGHT, THUMB_WIDTH, ModelConfig

__all__ = [
    "DataError",
    "read_manifest",
    "RecordDataset",
    "PretextBatchDataset",
    "record_loader",
    "pretext_loader",
    "coord_planes",
]

MANIFEST_NAME = "manifest.jsonl"
SAMPLES_SUBDIR = "samples"
META_NAME = "meta.json"
THUMB_NAME = "thumb.png"
SPLITS = ("train", "val", "test")

AUGMENT_MIN_SCALE = 0.75


class DataError(RuntimeError):
    """A dataset directory or batches file violates its documented format."""


def read_manifest(dataset_dir: str | Path) -> tuple[dict, list[dict]]:
    """Header dict and entry list; entry index == record id."""
    path = Path(dataset_dir) / MANIFEST_NAME
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not lines:
        raise DataError(f"empty manifest {path}")
    try:
        header = json.loads(lines[0])
        entries = [json.loads(line) for line in lines[1:] if line.strip()]
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {path}: {exc}") from exc
    return header, entries


def coord_planes() -> Tensor:
    """The two positional channels appended to thumbnails, shape (2, 149, 224)."""
    cx = (torch.arange(THUMB_WIDTH, dtype=torch.float32) + 0.5) / THUMB_WIDTH
    cy = (torch.arange(THUMB_HEIGHT, dtype=torch.float32) + 0.5) / THUMB_HEIGHT
    coord_x = cx.expand(THUMB_HEIGHT, THUMB_WIDTH)
    coord_y = cy[:, None].expand(THUMB_HEIGHT, THUMB_WIDTH)
    return torch.stack([coord_x, coord_y])


_COORDS = coord_planes()


def _load_png(path: Path) -> Tensor:
    """Decode an 8-bit RGB PNG to a float32 CHW tensor in [0, 1]."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as exc:
        raise DataError(f"cannot decode {path}: {exc}") from exc
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def _augment_patch(patch: Tensor, rng: np.random.Generator) -> Tensor:
    """Random sub-window of the patch frame, resampled back to full size."""
    size = int(round(PATCH_SIZE * rng.uniform(AUGMENT_MIN_SCALE, 1.0)))
    if size >= PATCH_SIZE:
        return patch
    ox = int(rng.integers(0, PATCH_SIZE - size + 1))
    oy = int(rng.integers(0, PATCH_SIZE - size + 1))
    window = patch[:, oy : oy + size, ox : ox + size]
    return F.interpolate(
        window.unsqueeze(0), size=(PATCH_SIZE, PATCH_SIZE), mode="bilinear", align_corners=False
    ).squeeze(0)


def _read_meta(rec_dir: Path) -> dict:
    try:
        with open(rec_dir / META_NAME, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"unreadable record meta in {rec_dir}: {exc}") from exc


def _check_bit_depth(meta: dict, rec_dir: Path) -> None:
    depth = meta.get("bit_depth", 8)
    if depth != 8:
        raise DataError(
            f"{rec_dir}: records with bit depth {depth} are not supported for training; "
            "generate the dataset with 8-bit output"
        )


class RecordDataset(Dataset):
    """Full records: 16 patches, coordinate-extended thumbnail, labels, rect."""

    def __init__(
        self,
        dataset_dir: str | Path,
        split: str | None = None,
        augment: bool = False,
        seed: int = 0,
        record_ids: list[int] | None = None,
    ) -> None:
        self.dataset_dir = Path(dataset_dir)
        samples = self.dataset_dir / SAMPLES_SUBDIR
        if not samples.is_dir():
            raise DataError(f"no {SAMPLES_SUBDIR}/ directory under {self.dataset_dir}")
        all_ids = sorted(int(p.name) for p in samples.iterdir() if p.name.isdigit())
        if not all_ids:
            raise DataError(f"no records under {samples}")
        if split is not None:
            if split not in SPLITS:
                raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
            _, entries = read_manifest(self.dataset_dir)
            if len(entries) != len(all_ids):
                raise DataError(
                    f"manifest lists {len(entries)} entries but {len(all_ids)} records exist"
                )
            all_ids = [i for i in all_ids if entries[i]["split"] == split]
        if record_ids is not None:
            wanted = set(record_ids)
            missing = wanted - set(all_ids)
            if missing:
                raise DataError(f"record ids not in dataset/split: {sorted(missing)}")
            all_ids = [i for i in all_ids if i in wanted]
        self.record_ids = all_ids
        self.split = split
        self.augment = augment
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.record_ids)

    def meta(self, index: int) -> dict:
        rec_dir = self.dataset_dir / SAMPLES_SUBDIR / f"{self.record_ids[index]:06d}"
        return _read_meta(rec_dir)

    def __getitem__(self, index: int) -> dict:
        record_id = self.record_ids[index]
        rec_dir = self.dataset_dir / SAMPLES_SUBDIR / f"{record_id:06d}"
        meta = _read_meta(rec_dir)
        _check_bit_depth(meta, rec_dir)
        patches = torch.stack(
            [_load_png(rec_dir / f"patch_{slot:02d}.png") for slot in range(GRID_CELLS)]
        )
        if self.augment:
            rng = np.random.default_rng([self.seed, self.epoch, record_id])
            patches = torch.stack([_augment_patch(p, rng) for p in patches])
        thumb_rgb = _load_png(rec_dir / THUMB_NAME)
        if thumb_rgb.shape != (3, THUMB_HEIGHT, THUMB_WIDTH):
            raise DataError(
                f"{rec_dir}: thumbnail is {tuple(thumb_rgb.shape)}, "
                f"expected (3, {THUMB_HEIGHT}, {THUMB_WIDTH})"
            )
        thumb = torch.cat([thumb_rgb, _COORDS])
        return {
            "record_id": record_id,
            "patches": patches,
            "thumb": thumb,
            "labels": torch.tensor(meta["patch_labels"], dtype=torch.int64),
            "rect": torch.tensor(meta["crop_rect"], dtype=torch.float32),
            "cropped": torch.tensor(float(meta["cropped"])),
            "size_factor": torch.tensor(float(meta["size_factor"])),
        }


class PretextBatchDataset(Dataset):
    """Items of a pretext batches file; group structure preserved for loading.

    ``batch_indices`` lists, per assembled batch, the flat item indices in
    file order, so a loader can iterate exactly the stored batches (whose
    slots cycle through all 16 grid positions).
    """

    def __init__(
        self,
        dataset_dir: str | Path,
        batches_path: str | Path,
        augment: bool = False,
        seed: int = 0,
        uncropped_only: bool = False,
    ) -> None:
        self.dataset_dir = Path(dataset_dir)
        try:
            doc = json.loads(Path(batches_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read batches file {batches_path}: {exc}") from exc
        for key in ("batch_size", "batches"):
            if key not in doc:
                raise DataError(f"batches file {batches_path} lacks key {key!r}")
        self.batch_size = doc["batch_size"]
        keep: dict[int, bool] = {}
        if uncropped_only:
            # Restrict supervision to full-frame records.  Slots are assigned
            # round-robin independently of crop status, so the surviving
            # labels stay balanced in expectation; underfull groups are kept
            # and empty ones dropped rather than re-batching.
            for batch in doc["batches"]:
                for item in batch:
                    rid = item["record_id"]
                    if rid not in keep:
                        rec_dir = self.dataset_dir / SAMPLES_SUBDIR / f"{rid:06d}"
                        keep[rid] = not _read_meta(rec_dir)["cropped"]
        self.items: list[dict] = []
        self.batch_indices: list[list[int]] = []
        for batch in doc["batches"]:
            indices = []
            for item in batch:
                if uncropped_only and not keep[item["record_id"]]:
                    continue
                indices.append(len(self.items))
                self.items.append(item)
            if indices:
                self.batch_indices.append(indices)
        if not self.items:
            raise DataError(
                f"batches file {batches_path} contains no usable items"
                + (" (all records are cropped)" if uncropped_only else "")
            )
        self.augment = augment
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> dict:
        item = self.items[index]
        patch = _load_png(self.dataset_dir / item["patch_path"])
        if self.augment:
            rng = np.random.default_rng([self.seed, self.epoch, index])
            patch = _augment_patch(patch, rng)
        return {
            "patch": patch,
            "label": torch.tensor(item["label"], dtype=torch.int64),
            "record_id": item["record_id"],
            "slot": item["slot"],
        }


def record_loader(
    dataset: RecordDataset,
    config: ModelConfig,
    epoch: int = 0,
    shuffle: bool = True,
) -> DataLoader:
    """Loader over full records; shuffling is seeded per (config.seed, epoch)."""
    dataset.set_epoch(epoch)
    generator = torch.Generator()
    generator.manual_seed(config.seed * 100003 + epoch)
    return DataLoader(
        dataset,
        batch_size=config.batch_size,
        shuffle=shuffle,
        generator=generator if shuffle else None,
        num_workers=config.workers,
        drop_last=False,
    )


def pretext_loader(
    dataset: PretextBatchDataset,
    config: ModelConfig,
    epoch: int = 0,
    shuffle_batches: bool = True,
) -> DataLoader:
    """Loader that yields the stored batches verbatim, optionally in shuffled order.

    Items are never re-grouped: each yielded batch is one assembled batch
    from the file, keeping its cyclic slot composition intact.
    """
    dataset.set_epoch(epoch)
    order = list(range(len(dataset.batch_indices)))
    if shuffle_batches:
        rng = np.random.default_rng([config.seed, epoch])
        rng.shuffle(order)
    batch_sampler = [dataset.batch_indices[i] for i in order]
    return DataLoader(dataset, batch_sampler=batch_sampler, num_workers=config.workers)
