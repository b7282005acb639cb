"""Tests for the SynthEye generator and the dataset directory format"""

import json

import numpy as np
import pytest
from PIL import Image

from app.conditions.labels import ConditionLabel
from app.data import (
    GLYPHS,
    Split,
    SynthEyeConfig,
    export_png,
    generate_dataset,
    load_dataset,
    read_manifest,
    render_frame,
    save_dataset,
    save_grid,
)
from app.data.dataset import ANNOTATIONS, IMAGES, empty_like
from app.errors import DataError, UserInputError
from app.hashing import sha256_array, sha256_json

SMALL = SynthEyeConfig(image_size=16, seed=3)


def test_default_prior_is_imbalanced():
    config = SynthEyeConfig()
    prior = config.resolved_phase_prior()
    assert np.isclose(prior.sum(), 1.0)
    assert prior.min() < 0.03
    assert np.all(np.diff(prior) < 0)
    for toolsets in config.resolved_toolset_priors():
        assert 3 <= len(toolsets) <= 5
        assert np.isclose(sum(p for _, p in toolsets), 1.0)
        assert toolsets[0][1] == config.dominant_mass


def test_generation_is_deterministic():
    a = generate_dataset(SMALL, 1)
    b = generate_dataset(SMALL, 1)
    assert np.array_equal(a.images, b.images)
    assert a.labels() == b.labels()
    assert a.images.shape == (1, 3, 16, 16)
    assert a.images.min() >= -1.0 and a.images.max() <= 1.0


def test_generation_is_worker_independent():
    serial = generate_dataset(SMALL, 12)
    threaded = generate_dataset(SMALL, 12, num_workers=4)
    assert np.array_equal(serial.images, threaded.images)
    assert serial.frame_ids == threaded.frame_ids


def test_offset_splits_differ():
    train = generate_dataset(SMALL, 5, Split.TRAIN)
    test = generate_dataset(SMALL, 5, Split.TEST, start_index=5)
    assert not set(train.image_hashes()) & set(test.image_hashes())
    assert test.frame_ids[0] == "test-000005"


def test_non_positive_count_is_rejected():
    with pytest.raises(UserInputError):
        generate_dataset(SMALL, 0)


def test_phase_frequencies_match_prior():
    count = 10_000
    dataset = generate_dataset(SynthEyeConfig(image_size=8, seed=11), count)
    prior = SynthEyeConfig().resolved_phase_prior()
    frequencies = np.bincount(dataset.phases, minlength=len(prior)) / count
    errors = np.sqrt(prior * (1 - prior) / count)
    assert np.all(np.abs(frequencies - prior) < 3 * errors)
    print(f"✓ Phase frequencies {np.round(frequencies, 4).tolist()}")


def test_toolset_flags_are_visible():
    dataset = generate_dataset(SynthEyeConfig(image_size=24, seed=5, noise_level=0.0), 1000)
    pixels = dataset.images.transpose(0, 2, 3, 1)
    for tool in range(dataset.num_tools):
        color = np.asarray(GLYPHS[tool][1]) / 127.5 - 1.0
        match = (np.abs(pixels - color).max(axis=-1) < 0.05).mean(axis=(1, 2))
        present = dataset.toolsets[:, tool] == 1
        if present.all() or not present.any():
            continue
        assert match[present].mean() > match[~present].mean(), f"tool {tool}"


def test_render_frame_shape_and_channels():
    config = SynthEyeConfig(image_size=16, channels=1)
    frame = render_frame(config, ConditionLabel(0, (1, 1, 1, 1, 1, 1)), np.random.default_rng(0))
    assert frame.shape == (1, 16, 16)


def test_invalid_priors_are_rejected():
    with pytest.raises(ValueError):
        SynthEyeConfig(num_phases=2, phase_prior=[0.5, 0.6])
    with pytest.raises(ValueError):
        SynthEyeConfig(num_phases=2, phase_prior=[1.0])
    with pytest.raises(ValueError):
        SynthEyeConfig(num_phases=1, num_tools=2, toolset_priors=[[((1, 0), 0.5), ((1, 0), 0.5)]])
    with pytest.raises(ValueError):
        SynthEyeConfig(num_tools=13)


def test_explicit_priors_are_used():
    config = SynthEyeConfig(
        image_size=8,
        num_phases=2,
        num_tools=2,
        phase_prior=[0.0, 1.0],
        toolset_priors=[[((1, 0), 1.0)], [((0, 1), 1.0)]],
    )
    dataset = generate_dataset(config, 20)
    assert set(dataset.labels()) == {ConditionLabel(1, (0, 1))}


def test_dataset_round_trip(tmp_path):
    dataset = generate_dataset(SMALL, 6)
    manifest = save_dataset(tmp_path / "train", dataset, {"seed": 3})
    loaded = load_dataset(tmp_path / "train")
    assert np.array_equal(loaded.images, dataset.images)
    assert loaded.labels() == dataset.labels()
    assert loaded.frame_ids == dataset.frame_ids
    assert loaded.tool_names == dataset.tool_names
    assert loaded.phase_names == dataset.phase_names
    assert loaded.split == Split.TRAIN
    assert manifest["generator"] == {"seed": 3}
    assert not (tmp_path / "train.partial").exists()


def test_manifest_hash_matches_recomputation(tmp_path):
    dataset = generate_dataset(SMALL, 4)
    save_dataset(tmp_path / "set", dataset)
    recorded = read_manifest(tmp_path / "set")["content_hash"]
    recomputed = sha256_json(
        {
            "images": sha256_array(dataset.images),
            "phases": sha256_array(dataset.conditions.phases),
            "toolsets": sha256_array(dataset.conditions.toolsets.astype(np.int64)),
        }
    )
    assert recorded == recomputed


def test_truncated_images_are_a_data_error(tmp_path):
    save_dataset(tmp_path / "set", generate_dataset(SMALL, 4))
    target = tmp_path / "set" / IMAGES
    data = target.read_bytes()
    target.write_bytes(data[: len(data) // 2])
    with pytest.raises(DataError, match="data ends at offset"):
        load_dataset(tmp_path / "set")


def test_tampered_annotations_are_a_data_error(tmp_path):
    save_dataset(tmp_path / "set", generate_dataset(SMALL, 4))
    target = tmp_path / "set" / ANNOTATIONS
    text = target.read_text()
    target.write_text(text.replace("train-000000", "train-00000X"))
    with pytest.raises(DataError):
        load_dataset(tmp_path / "set")


def test_count_mismatch_is_a_data_error(tmp_path):
    save_dataset(tmp_path / "set", generate_dataset(SMALL, 4))
    manifest_path = tmp_path / "set" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["count"] = 5
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(DataError):
        load_dataset(tmp_path / "set")


def test_missing_directory_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nothing")


def test_existing_output_needs_overwrite(tmp_path):
    dataset = generate_dataset(SMALL, 2)
    save_dataset(tmp_path / "set", dataset)
    with pytest.raises(UserInputError):
        save_dataset(tmp_path / "set", dataset)
    save_dataset(tmp_path / "set", dataset, overwrite=True)


def test_take_concat_and_empty_sets():
    dataset = generate_dataset(SMALL, 6)
    head = dataset.take(slice(0, 2))
    joined = head.concat(dataset.take(slice(2, 6)), Split.SYNTHETIC)
    assert joined.split == Split.SYNTHETIC
    assert np.array_equal(joined.images, dataset.images)
    empty = empty_like(dataset, Split.SYNTHETIC)
    assert len(empty) == 0
    assert len(dataset.concat(empty)) == 6


def test_png_export_and_grid(tmp_path):
    dataset = generate_dataset(SMALL, 3)
    paths = export_png(dataset, tmp_path / "png", scale=2)
    assert len(paths) == 3
    with Image.open(paths[0]) as image:
        assert image.size == (32, 32)

    grid = save_grid(dataset.images, 2, 2, tmp_path / "grid.png", scale=1)
    with Image.open(grid) as image:
        assert image.size == (32, 32)
        assert image.getpixel((31, 31)) == (0, 0, 0)
