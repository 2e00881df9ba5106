"""Corpus scanning, split assignment, generation, sweeps, batches, stats."""

import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cropforge import (
    CropforgeError,
    DatasetManifest,
    ImageBuffer,
    ManifestEntry,
    PipelineError,
    assemble_pretext_batches,
    assign_splits,
    generate,
    scan_and_filter,
    stats,
    sweep,
)
from cropforge.dataset import (
    ScanConfig,
    config_digest_of,
    ingest_image,
    profile_for_axis,
    sweep_dir_name,
)
from cropforge.lens import AberrationProfile
from cropforge.records import META_NAME, read_meta, record_dir_name
from tests.conftest import texture, write_texture_png


def _tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


# ---------------------------------------------------------------- ingestion


def _save(path: Path, width: int, height: int, seed: int = 500) -> None:
    write_texture_png(path, width, height, seed)


def test_scan_accepts_and_rejects(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    _save(src / "ok_landscape.png", 1500, 1000, 1)       # accepted as-is
    _save(src / "ok_portrait.png", 1000, 1500, 2)        # rotated to landscape
    _save(src / "too_small.png", 900, 600, 3)            # width < 1024 → reject
    _save(src / "bad_aspect.png", 1504, 1000, 4)         # 1.504 > 1.5+0.002·…
    _save(src / "huge.png", 3000, 2000, 5)               # downscaled at load
    (src / "not_an_image.txt").write_text("hello")
    (src / "corrupt.png").write_bytes(b"\x89PNG\r\n\x1a\ngarbage")

    manifest = scan_and_filter(src, master_seed=11)
    names = [Path(e.source_path).name for e in manifest.entries]
    assert names == ["huge.png", "ok_landscape.png", "ok_portrait.png"]

    by_name = {Path(e.source_path).name: e for e in manifest.entries}
    assert by_name["ok_landscape.png"].rotated == "none"
    assert by_name["ok_portrait.png"].rotated in ("left", "right")
    # stored dims are post-rotation, post-downscale landscape dims
    assert by_name["ok_portrait.png"].width == 1500
    assert by_name["ok_portrait.png"].height == 1000
    assert by_name["huge.png"].width == 2048
    assert by_name["huge.png"].height == 1365


def test_scan_aspect_tolerance_boundary(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    _save(src / "within.png", 1500, 1001, 6)   # 1.4985, |Δ|=0.0015 < 0.002 ok
    _save(src / "outside.png", 1500, 996, 7)   # 1.506, rejected
    manifest = scan_and_filter(src, master_seed=0)
    names = [Path(e.source_path).name for e in manifest.entries]
    assert names == ["within.png"]


def test_portrait_rotation_direction_is_seeded(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(12):
        _save(src / f"p_{i:02d}.png", 1000, 1500, 20 + i)
    m1 = scan_and_filter(src, master_seed=1)
    m2 = scan_and_filter(src, master_seed=1)
    assert [e.rotated for e in m1.entries] == [e.rotated for e in m2.entries]
    dirs = {e.rotated for e in m1.entries}
    assert dirs == {"left", "right"}  # both directions occur across 12 draws


def test_ingest_rotates_and_downscales():
    img = ImageBuffer(texture(1200, 1800, seed=8))  # portrait
    out = ingest_image(img, "left")
    assert (out.width, out.height) == (1800, 1200)
    big = ImageBuffer(texture(3000, 2000, seed=9))
    out = ingest_image(big, "none")
    assert (out.width, out.height) == (2048, 1365)
    small = ImageBuffer(texture(1500, 1000, seed=10))
    out = ingest_image(small, "none")
    assert np.array_equal(out.planes, small.planes)


def test_rotation_is_lossless():
    img = ImageBuffer(texture(900, 1350, seed=11))
    left = ingest_image(img, "left")
    right = ingest_image(img, "right")
    assert np.array_equal(np.rot90(img.planes, 1, axes=(1, 2)), left.planes)
    assert np.array_equal(np.rot90(img.planes, -1, axes=(1, 2)), right.planes)


# ---------------------------------------------------------------- splits


def _fake_manifest(n: int, seed: int = 0) -> DatasetManifest:
    entries = tuple(
        ManifestEntry(f"img_{i:05d}.png", 1500, 1000, "none") for i in range(n)
    )
    return DatasetManifest(entries, seed, config_digest_of(ScanConfig(), seed), "mem")


def test_split_proportions_1000():
    m = assign_splits(_fake_manifest(1000, seed=5))
    counts = {"train": 0, "val": 0, "test": 0}
    for e in m.entries:
        counts[e.split] += 1
    assert counts == {"train": 900, "val": 50, "test": 50}


@pytest.mark.parametrize("n", [6, 19, 20, 21, 99, 100, 101])
def test_split_proportions_small(n):
    m = assign_splits(_fake_manifest(n, seed=7))
    counts = {"train": 0, "val": 0, "test": 0}
    for e in m.entries:
        counts[e.split] += 1
    expected_val = int(np.floor(0.05 * n + 0.5))
    assert counts["val"] == expected_val
    assert counts["test"] == expected_val
    assert counts["train"] == n - 2 * expected_val


def test_crop_flags_half_per_split():
    m = assign_splits(_fake_manifest(200, seed=9))
    for split in ("train", "val", "test"):
        in_split = [e for e in m.entries if e.split == split]
        flagged = sum(e.crop_assigned for e in in_split)
        assert flagged == len(in_split) // 2


def test_split_assignment_deterministic_and_seed_sensitive():
    a = assign_splits(_fake_manifest(100, seed=3))
    b = assign_splits(_fake_manifest(100, seed=3))
    c = assign_splits(_fake_manifest(100, seed=4))
    assert [e.split for e in a.entries] == [e.split for e in b.entries]
    assert [e.split for e in a.entries] != [e.split for e in c.entries]
    assert [e.sample_seed for e in a.entries] == [e.sample_seed for e in b.entries]


def test_manifest_jsonl_roundtrip(tmp_path):
    m = assign_splits(_fake_manifest(25, seed=13))
    path = tmp_path / "manifest.jsonl"
    m.save(path)
    back = DatasetManifest.load(path)
    assert back == m
    first_line = path.read_text().splitlines()[0]
    header = json.loads(first_line)
    assert header["master_seed"] == 13
    assert "config_digest" in header


def test_manifest_requires_sorted_unique_entries():
    e1 = ManifestEntry("b.png", 1500, 1000, "none")
    e2 = ManifestEntry("a.png", 1500, 1000, "none")
    with pytest.raises(ValueError):
        DatasetManifest((e1, e2), 0, "x", "mem")
    with pytest.raises(ValueError):
        DatasetManifest((e2, e2), 0, "x", "mem")


# ---------------------------------------------------------------- generation


def test_generate_writes_expected_layout(small_dataset):
    assert (small_dataset / "manifest.jsonl").is_file()
    assert (small_dataset / "summary.json").is_file()
    sample_dirs = sorted((small_dataset / "samples").iterdir())
    assert [d.name for d in sample_dirs] == [record_dir_name(i) for i in range(6)]
    for d in sample_dirs:
        files = {p.name for p in d.iterdir()}
        assert META_NAME in files and "thumb.png" in files
        assert sum(1 for f in files if f.startswith("patch_")) == 16


def test_generate_requires_assigned_manifest(tmp_path, small_corpus):
    manifest = scan_and_filter(small_corpus, master_seed=3)  # no splits yet
    with pytest.raises(CropforgeError):
        generate(manifest, AberrationProfile(), tmp_path / "out")


def test_summary_is_deterministic_and_timestamp_free(small_dataset):
    summary = json.loads((small_dataset / "summary.json").read_text())
    assert summary["samples"] == 6
    assert summary["failures"] == []
    assert set(summary["split_counts"]) == {"train", "val", "test"}
    assert "label_histogram_cropped" in summary
    assert "label_histogram_uncropped" in summary
    # uncropped records contribute one of each label per sample
    n_uncropped = summary["samples"] - sum(summary["crop_counts"].values())
    assert summary["label_histogram_uncropped"] == [n_uncropped] * 16
    text = json.dumps(summary).lower()
    assert "time" not in text and "date" not in text


def test_generate_deterministic_across_workers(tmp_path, small_corpus):
    manifest = assign_splits(scan_and_filter(small_corpus, master_seed=3))
    out1 = tmp_path / "w1"
    out2 = tmp_path / "w2"
    generate(manifest, AberrationProfile(), out1, workers=1)
    generate(manifest, AberrationProfile(), out2, workers=3)
    t1, t2 = _tree_bytes(out1), _tree_bytes(out2)
    assert t1.keys() == t2.keys()
    assert t1 == t2


def test_resume_reproduces_identical_bytes(tmp_path, small_corpus, small_dataset):
    manifest = assign_splits(scan_and_filter(small_corpus, master_seed=3))
    out = tmp_path / "resumed"
    shutil.copytree(small_dataset, out)
    # wreck one record: drop its meta (incomplete) and a patch of another
    victim = out / "samples" / record_dir_name(2)
    (victim / META_NAME).unlink()
    (victim / "patch_05.png").unlink()
    generate(manifest, AberrationProfile(), out, workers=1, resume=True)
    assert _tree_bytes(out) == _tree_bytes(small_dataset)


def test_generate_without_resume_overwrites_deterministically(
    tmp_path, small_corpus, small_dataset
):
    manifest = assign_splits(scan_and_filter(small_corpus, master_seed=3))
    out = tmp_path / "occupied"
    shutil.copytree(small_dataset, out)
    # corrupt a patch, then regenerate without resume: everything is rebuilt
    (out / "samples" / record_dir_name(1) / "patch_03.png").write_bytes(b"junk")
    generate(manifest, AberrationProfile(), out, workers=1)
    assert _tree_bytes(out) == _tree_bytes(small_dataset)


def test_failure_budget_aborts(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(6):
        _save(src / f"img_{i}.png", 1100, 733, 600 + i)
    manifest = assign_splits(scan_and_filter(src, master_seed=2))
    # corrupt one source after scanning: budget floor(0.01·6) = 0 → abort
    (src / "img_3.png").write_bytes(b"\x89PNG\r\n\x1a\nbroken")
    with pytest.raises(PipelineError):
        generate(manifest, AberrationProfile(), tmp_path / "out", workers=1)


def test_profile_affects_pixels_not_structure(tmp_path, small_corpus, small_dataset):
    manifest = assign_splits(scan_and_filter(small_corpus, master_seed=3))
    out = tmp_path / "vig"
    generate(manifest, AberrationProfile(vignette_strength=1.0), out, workers=1)
    base_meta = read_meta(small_dataset / "samples" / record_dir_name(0))
    vig_meta = read_meta(out / "samples" / record_dir_name(0))
    for key in ("crop_rect", "patch_labels", "grid_slots", "sample_seed"):
        assert base_meta[key] == vig_meta[key]
    assert base_meta["aberration_profile"] != vig_meta["aberration_profile"]
    base_thumb = (small_dataset / "samples" / record_dir_name(0) / "thumb.png").read_bytes()
    vig_thumb = (out / "samples" / record_dir_name(0) / "thumb.png").read_bytes()
    assert base_thumb != vig_thumb


# ---------------------------------------------------------------- sweeps


def test_profile_for_axis():
    # tca strengths are scale offsets: the channel is magnified by 1 + strength
    assert profile_for_axis("tca_g", -0.002) == AberrationProfile(tca_scale=(1.0, 0.998, 1.0))
    assert profile_for_axis("tca_r", 0.001) == AberrationProfile(tca_scale=(1.001, 1.0, 1.0))
    assert profile_for_axis("tca_g", 0.0).is_neutral
    assert profile_for_axis("vignette", 0.0).is_neutral
    assert profile_for_axis("distortion", 0.0).is_neutral
    assert profile_for_axis("vignette", 0.5) == AberrationProfile(vignette_strength=0.5)
    assert profile_for_axis("saturation", 1.5) == AberrationProfile(saturation=1.5)
    assert profile_for_axis("distortion", -0.05) == AberrationProfile(distortion_k1=-0.05)
    with pytest.raises(ValueError):
        profile_for_axis("bogus", 0.1)
    with pytest.raises(ValueError):
        profile_for_axis("tca_g", 0.05)  # scale 1.05 out of range
    with pytest.raises(ValueError):
        profile_for_axis("vignette", 2.0)


def test_sweep_dir_names():
    assert sweep_dir_name("tca_g", -0.002) == "tca_g_-0.002"
    assert sweep_dir_name("vignette", 0.5) == "vignette_0.5"
    assert sweep_dir_name("vignette", 1.0) == "vignette_1"


def test_sweep_variants_share_geometry(tmp_path, small_corpus, small_dataset):
    manifest = assign_splits(scan_and_filter(small_corpus, master_seed=3))
    roots = sweep(manifest, "tca_g", [0.0, -0.002], tmp_path / "sw", workers=1)
    assert [r.name for r in roots] == ["tca_g_0", "tca_g_-0.002"]

    # strength 0 on the tca axis is the neutral profile: bytes match the
    # baseline dataset exactly
    assert _tree_bytes(roots[0]) == _tree_bytes(small_dataset)

    # nonzero strength: identical metadata except the profile, different pixels
    for rid in range(6):
        m0 = read_meta(roots[0] / "samples" / record_dir_name(rid))
        m1 = read_meta(roots[1] / "samples" / record_dir_name(rid))
        assert m1["aberration_profile"]["tca_scale"] == [1.0, 0.998, 1.0]
        m0.pop("aberration_profile"), m1.pop("aberration_profile")
        assert m0 == m1
        t0 = (roots[0] / "samples" / record_dir_name(rid) / "thumb.png").read_bytes()
        t1 = (roots[1] / "samples" / record_dir_name(rid) / "thumb.png").read_bytes()
        assert t0 != t1


def test_sweep_tca_preserves_mean_brightness(tmp_path, small_corpus, small_dataset):
    from cropforge.records import load_thumbnail

    manifest = assign_splits(scan_and_filter(small_corpus, master_seed=3))
    roots = sweep(manifest, "tca_g", [-0.002], tmp_path / "sw2", workers=1)
    for rid in range(6):
        base = load_thumbnail(small_dataset / "samples" / record_dir_name(rid))
        moved = load_thumbnail(roots[0] / "samples" / record_dir_name(rid))
        assert abs(float(base.planes.mean() - moved.planes.mean())) <= 1e-3


# -------------------------------------------------- fabricated record trees


def _fabricate_meta_tree(root: Path, n: int) -> None:
    """Meta-only records (no pixels): enough for stats and batch assembly."""
    from cropforge.seeds import make_rng
    from cropforge import sample_crop_rect

    rng = make_rng(31)
    for rid in range(n):
        rec_dir = root / "samples" / record_dir_name(rid)
        rec_dir.mkdir(parents=True)
        cropped = rid % 2 == 0
        rect = sample_crop_rect(rng) if cropped else None
        rect_t = rect.to_tuple() if rect else (0.0, 1.0, 0.0, 1.0)
        labels = [int(rng.integers(16)) for _ in range(16)]
        meta = {
            "record_id": rid,
            "cropped": cropped,
            "crop_rect": list(rect_t),
            "size_factor": rect_t[1] - rect_t[0],
            "patch_labels": labels,
            "grid_slots": list(range(16)),
            "patch_centers_px": [[0.0, 0.0]] * 16,
            "patch_frame_size": [1500, 1000],
            "aberration_profile": AberrationProfile().to_dict(),
            "sample_seed": rid,
            "bit_depth": 8,
        }
        (rec_dir / META_NAME).write_text(json.dumps(meta))


@pytest.fixture(scope="module")
def fabricated_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("fab_batches") / "ds"
    n = 140
    _fabricate_meta_tree(root, n)
    manifest = assign_splits(_fake_manifest(n, seed=17))
    manifest.save(root / "manifest.jsonl")
    return root, manifest


# ---------------------------------------------------------------- batches


def test_batches_cover_slots_uniformly(fabricated_tree):
    root, _ = fabricated_tree
    out = assemble_pretext_batches(root, batch_size=64)
    assert out["batch_size"] == 64
    assert len(out["batches"]) == 2  # 140 records → 2×64, trailing 12 dropped
    for t, batch in enumerate(out["batches"]):
        assert len(batch) == 64
        slots = [item["slot"] for item in batch]
        counts = np.bincount(slots, minlength=16)
        assert np.array_equal(counts, np.full(16, 4))
        for b, item in enumerate(batch):
            assert item["slot"] == (b + t) % 16  # cyclic shift across batches
            assert item["patch_path"].endswith(f"patch_{item['slot']:02d}.png")
            assert 0 <= item["label"] <= 15
    # labels come from the meta document at the shifted slot
    probe = out["batches"][1][5]
    meta = read_meta(root / "samples" / record_dir_name(probe["record_id"]))
    assert probe["label"] == meta["patch_labels"][probe["slot"]]


def test_batches_b16_each_slot_once(fabricated_tree):
    root, _ = fabricated_tree
    out = assemble_pretext_batches(root, batch_size=16)
    assert len(out["batches"]) == 140 // 16
    for batch in out["batches"]:
        assert sorted(item["slot"] for item in batch) == list(range(16))


def test_batches_reject_bad_batch_size(fabricated_tree):
    root, _ = fabricated_tree
    for bad in (10, 0, -16, 8):
        with pytest.raises(ValueError):
            assemble_pretext_batches(root, batch_size=bad)


def test_batches_split_filter(fabricated_tree):
    root, manifest = fabricated_tree
    train_ids = {i for i, e in enumerate(manifest.entries) if e.split == "train"}
    out = assemble_pretext_batches(root, batch_size=16, split="train")
    seen = {item["record_id"] for batch in out["batches"] for item in batch}
    assert seen <= train_ids
    assert len(out["batches"]) == len(train_ids) // 16
    with pytest.raises(ValueError):
        assemble_pretext_batches(root, batch_size=16, split="bogus")


def test_batches_too_few_records_yield_nothing(small_dataset):
    out = assemble_pretext_batches(small_dataset, batch_size=16)
    assert out["batches"] == []  # 6 records < one 16-sample batch


# ---------------------------------------------------------------- stats


def test_stats_on_fabricated_tree(tmp_path):
    from scipy.stats import chisquare

    root = tmp_path / "fab"
    _fabricate_meta_tree(root, 4000)
    s = stats(root)
    assert s["samples"] == 4000
    assert s["cropped"] == 2000
    assert s["crop_rate"] == 0.5
    f_hist = np.asarray(s["size_factor_histogram"]["counts"])
    assert f_hist.sum() == 2000
    assert chisquare(f_hist).pvalue > 0.01  # uniform f over [0.5, 0.9]
    edges = s["pinned_edge_counts"]
    assert sum(edges.values()) == 2000
    assert chisquare(list(edges.values())).pvalue > 0.01
    assert sum(s["label_histogram"]) == 4000 * 16


def test_stats_on_real_dataset(small_dataset):
    s = stats(small_dataset)
    assert s["samples"] == 6
    assert s["cropped"] == sum(
        read_meta(small_dataset / "samples" / record_dir_name(i))["cropped"]
        for i in range(6)
    )
    assert s["crop_rate"] == 0.5  # every split has an even member count
    assert s["corrupt_records"] == []


def test_stats_tolerates_corrupt_meta(tmp_path):
    root = tmp_path / "fab2"
    _fabricate_meta_tree(root, 10)
    (root / "samples" / record_dir_name(4) / META_NAME).write_text("{broken")
    s = stats(root)
    assert s["samples"] == 9
    assert len(s["corrupt_records"]) == 1


def test_stats_empty_dataset_is_error(tmp_path):
    (tmp_path / "empty" / "samples").mkdir(parents=True)
    with pytest.raises(CropforgeError):
        stats(tmp_path / "empty")
    with pytest.raises(CropforgeError):
        stats(tmp_path / "nonexistent")
