"""Tests for settings layering and --set overrides"""

import numpy as np
import pytest

from app.config import Precision, SamplerKind, load_settings, parse_overrides
from app.errors import UserInputError


@pytest.fixture(autouse=True)
def clean_environment(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("SEED", "DATA__TRAIN_COUNT", "SAMPLING__SAMPLER", "OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)


def test_defaults():
    settings = load_settings()
    assert settings.seed == 0
    assert settings.schedule.num_steps == 200
    assert settings.sampling.sampler == SamplerKind.DDIM
    assert settings.guidance.weight == 2.0
    assert settings.guidance.dropout_probability == 0.1
    assert settings.sampling.count is None
    assert settings.precision.dtype == np.float64


def test_parse_overrides():
    parsed = parse_overrides(
        ["seed=4", "data.generator.image_size=16", "sampling.sampler=ddpm", "model.channel_mults=[1,2]"]
    )
    assert parsed == {
        "seed": 4,
        "data": {"generator": {"image_size": 16}},
        "sampling": {"sampler": "ddpm"},
        "model": {"channel_mults": [1, 2]},
    }


@pytest.mark.parametrize("item", ["seed", "=3", "seed=1 seed.x=2"])
def test_malformed_overrides(item):
    with pytest.raises(UserInputError):
        parse_overrides(item.split(" "))


def test_config_file_environment_and_overrides_layer(tmp_path, monkeypatch):
    config = tmp_path / "run.env"
    config.write_text("SEED=7\nDATA__TRAIN_COUNT=12\nDATA__GENERATOR__IMAGE_SIZE=16\nSAMPLING__SAMPLER=ddpm\n")
    settings = load_settings(config)
    assert settings.seed == 7
    assert settings.data.train_count == 12
    assert settings.data.generator.image_size == 16
    assert settings.sampling.sampler == SamplerKind.DDPM

    monkeypatch.setenv("SEED", "9")
    assert load_settings(config).seed == 9

    layered = load_settings(config, ["seed=11", "data.test_count=5"])
    assert layered.seed == 11
    assert layered.data.train_count == 12
    assert layered.data.test_count == 5


def test_missing_config_file(tmp_path):
    with pytest.raises(UserInputError, match="does not exist"):
        load_settings(tmp_path / "missing.env")


@pytest.mark.parametrize(
    "override",
    ["schedule.num_steps=0", "guidance.dropout_probability=2", "precision=float16", "sampling.sampler=euler"],
)
def test_invalid_values_are_user_errors(override):
    with pytest.raises(UserInputError, match="invalid configuration"):
        load_settings(overrides=[override])


def test_config_hash():
    first = load_settings(overrides=["seed=3"])
    again = load_settings(overrides=["seed=3"])
    other = load_settings(overrides=["seed=4"])
    assert first.config_hash() == again.config_hash()
    assert first.config_hash() != other.config_hash()
    assert first.resolved()["precision"] == Precision.FLOAT64.value
