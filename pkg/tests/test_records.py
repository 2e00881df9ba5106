"""On-disk sample records: layout, metadata, resume marker semantics."""

import json

import numpy as np
import pytest

from cropforge import CropforgeError, make_rng, prepare_sample
from cropforge.lens import AberrationProfile
from cropforge.records import (
    META_NAME,
    THUMB_NAME,
    load_patches,
    load_thumbnail,
    patch_name,
    profile_of,
    read_meta,
    record_complete,
    record_dir_name,
    write_record,
)
from tests.conftest import texture_buffer


@pytest.fixture(scope="module")
def sample_record():
    img = texture_buffer(1100, 733, seed=60)
    return prepare_sample(
        img,
        True,
        AberrationProfile(vignette_strength=0.25),
        make_rng(21),
        sample_seed=12345,
    )


def test_names():
    assert record_dir_name(7) == "000007"
    assert record_dir_name(123456) == "123456"
    assert patch_name(0) == "patch_00.png"
    assert patch_name(15) == "patch_15.png"


def test_write_and_read_roundtrip(tmp_path, sample_record):
    rec_dir = write_record(tmp_path, 3, sample_record, bit_depth=8)
    assert rec_dir == tmp_path / "samples" / "000003"
    files = sorted(p.name for p in rec_dir.iterdir())
    assert files == sorted([META_NAME, THUMB_NAME] + [patch_name(s) for s in range(16)])

    meta = read_meta(rec_dir)
    assert meta["record_id"] == 3
    assert meta["cropped"] is True
    assert meta["sample_seed"] == 12345
    assert meta["bit_depth"] == 8
    assert len(meta["patch_labels"]) == 16
    assert sorted(meta["grid_slots"]) == list(range(16))
    assert "provenance" not in meta

    prof = profile_of(meta)
    assert prof == AberrationProfile(vignette_strength=0.25)

    patches = load_patches(rec_dir)
    assert len(patches) == 16
    for disk, mem in zip(patches, sample_record.patch_set.patches):
        assert disk.width == 96 and disk.height == 96
        assert np.max(np.abs(disk.planes - mem.planes)) <= 1 / 255 + 1e-9

    thumb = load_thumbnail(rec_dir)
    assert (thumb.width, thumb.height) == (224, 149)
    assert (
        np.max(np.abs(thumb.planes - sample_record.thumbnail.rgb.planes))
        <= 1 / 255 + 1e-9
    )


def test_write_16bit(tmp_path, sample_record):
    rec_dir = write_record(tmp_path, 0, sample_record, bit_depth=16)
    assert read_meta(rec_dir)["bit_depth"] == 16
    patches = load_patches(rec_dir)
    assert np.max(np.abs(patches[0].planes - sample_record.patch_set.patches[0].planes)) <= 1 / 65535 + 1e-9


def test_meta_written_last(tmp_path, sample_record):
    # record_complete keys off meta.json, which must appear only after all
    # pixel files are in place — the resume marker contract.
    rec_dir = tmp_path / "samples" / record_dir_name(1)
    assert not record_complete(rec_dir)
    write_record(tmp_path, 1, sample_record)
    assert record_complete(rec_dir)
    # removing a patch but keeping meta means a *complete-looking* marker must
    # never occur mid-write; simulate a crashed write by removing meta first
    (rec_dir / META_NAME).unlink()
    assert not record_complete(rec_dir)


def test_no_dimension_leak_without_debug(tmp_path, sample_record):
    rec_dir = write_record(tmp_path, 2, sample_record)
    meta = read_meta(rec_dir)
    text = json.dumps(meta)
    assert "source" not in text
    assert "1100" not in text.replace('"patch_frame_size"', "")
    assert "733" not in text


def test_debug_provenance_flag(tmp_path, sample_record):
    rec_dir = write_record(tmp_path, 4, sample_record, debug_provenance=True)
    meta = read_meta(rec_dir)
    prov = meta["provenance"]
    assert prov["source_width"] == 1100
    assert prov["source_height"] == 733
    assert len(prov["jitters"]) == 16
    assert len(prov["thumb_chain"]) == 3


def test_meta_is_sorted_and_stable(tmp_path, sample_record):
    d1 = write_record(tmp_path / "a", 5, sample_record)
    d2 = write_record(tmp_path / "b", 5, sample_record)
    assert (d1 / META_NAME).read_bytes() == (d2 / META_NAME).read_bytes()
    keys = list(read_meta(d1).keys())
    assert keys == sorted(keys)


def test_read_meta_corrupt(tmp_path, sample_record):
    rec_dir = write_record(tmp_path, 6, sample_record)
    (rec_dir / META_NAME).write_text("{not json")
    with pytest.raises(CropforgeError):
        read_meta(rec_dir)
