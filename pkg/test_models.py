"""Tests for the embeddings, the denoiser, the classifier and checkpoints"""

import numpy as np
import pytest

from app.autodiff import functional as F
from app.conditions.labels import ConditionBatch, ConditionLabel
from app.errors import DataError, ShapeError, UserInputError
from app.models import (
    ClassifierConfig,
    DenoiserConfig,
    DenoiserNetwork,
    ToolClassifier,
    condition_sensitivity,
    embed_condition,
)
from app.models.checkpoint import CLASSIFIER, DENOISER, load_checkpoint, load_classifier, load_denoiser, save_checkpoint


def tiny_config(**overrides):
    fields = {
        "image_channels": 2,
        "image_size": 8,
        "num_phases": 3,
        "num_tools": 2,
        "num_steps": 20,
        "base_width": 4,
        "channel_mults": (1, 2),
        "blocks_per_level": 1,
        "embedding_dim": 8,
        "num_groups": 2,
    }
    fields.update(overrides)
    return DenoiserConfig(**fields)


def tiny_classifier_config():
    return ClassifierConfig(image_channels=2, image_size=8, num_tools=2, num_phases=3, widths=(4, 8), num_groups=2)


def batch(*labels, num_tools=2):
    return ConditionBatch.from_labels(list(labels), num_tools)


def test_embedding_is_deterministic():
    embedder = DenoiserNetwork(tiny_config()).embedder
    a = embed_condition(embedder, 5, 1, (1, 0))
    b = embed_condition(embedder, 5, 1, (1, 0))
    assert np.array_equal(a.concatenated, b.concatenated)
    assert a.concatenated.shape == (3 * 8,)


def test_null_condition_embedding():
    embedder = DenoiserNetwork(tiny_config()).embedder
    null = embed_condition(embedder, 7, None, None)
    phase, toolset = embedder.null_condition_embedding()
    assert np.allclose(null.phase_embedding, phase)
    assert np.allclose(null.toolset_embedding, toolset)

    real = embed_condition(embedder, 7, 0, (0, 0))
    assert not np.allclose(real.phase_embedding, null.phase_embedding)
    assert not np.allclose(real.toolset_embedding, null.toolset_embedding)


def test_toolset_change_touches_only_toolset_third():
    embedder = DenoiserNetwork(tiny_config()).embedder
    a = embed_condition(embedder, 3, 2, (1, 0))
    b = embed_condition(embedder, 3, 2, (0, 1))
    assert np.array_equal(a.time_embedding, b.time_embedding)
    assert np.array_equal(a.phase_embedding, b.phase_embedding)
    assert not np.allclose(a.toolset_embedding, b.toolset_embedding)


def test_embedding_rejects_bad_conditions():
    embedder = DenoiserNetwork(tiny_config()).embedder
    with pytest.raises(UserInputError):
        embed_condition(embedder, 3, 5, (1, 0))
    with pytest.raises(ShapeError):
        embed_condition(embedder, 3, 1, (1, 0, 1))
    with pytest.raises(UserInputError):
        embed_condition(embedder, 3, 1, None)


def test_denoiser_shape_and_batch_independence():
    model = DenoiserNetwork(tiny_config(), seed=1)
    x = np.random.default_rng(0).standard_normal((1, 2, 8, 8))
    doubled = np.concatenate([x, x])
    conditions = batch(ConditionLabel(1, (1, 1)), ConditionLabel(1, (1, 1)))
    out = model.predict_noise(doubled, np.array([4, 4]), conditions)
    assert out.shape == doubled.shape
    assert np.all(np.isfinite(out))
    assert np.array_equal(out[0], out[1])


def test_denoiser_rejects_bad_inputs():
    model = DenoiserNetwork(tiny_config())
    conditions = batch(ConditionLabel(0, (0, 1)))
    with pytest.raises(ShapeError):
        model.predict_noise(np.zeros((1, 3, 8, 8)), np.array([1]), conditions)
    with pytest.raises(UserInputError):
        model.predict_noise(np.zeros((1, 2, 8, 8)), np.array([21]), conditions)
    with pytest.raises(UserInputError):
        model.predict_noise(np.zeros((1, 2, 8, 8)), np.array([1]), batch(ConditionLabel(4, (0, 1))))
    with pytest.raises(UserInputError):
        DenoiserNetwork(tiny_config(image_size=9))


def test_null_conditions_match_none():
    model = DenoiserNetwork(tiny_config())
    x = np.random.default_rng(2).standard_normal((2, 2, 8, 8))
    steps = np.array([3, 9])
    assert np.array_equal(
        model.predict_noise(x, steps, None), model.predict_noise(x, steps, ConditionBatch.null(2, 2))
    )


def test_denoiser_loss_gradient_matches_finite_differences():
    model = DenoiserNetwork(tiny_config(), seed=3)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 2, 8, 8))
    noise = rng.standard_normal((2, 2, 8, 8))
    steps = np.array([2, 17])
    conditions = batch(ConditionLabel(0, (1, 0)), None)

    def loss():
        return F.mean_squared_error(model.forward(x, steps, conditions), noise)

    model.zero_grad()
    loss().backward()
    eps = 1e-6
    analytic, numeric = [], []
    for _, param in list(model.named_parameters())[::3]:
        for flat in rng.choice(param.data.size, size=min(3, param.data.size), replace=False):
            index = np.unravel_index(flat, param.shape)
            analytic.append(0.0 if param.grad is None else param.grad[index])
            original = param.data[index]
            param.data[index] = original + eps
            upper = loss().item()
            param.data[index] = original - eps
            lower = loss().item()
            param.data[index] = original
            numeric.append((upper - lower) / (2 * eps))
    analytic, numeric = np.array(analytic), np.array(numeric)
    error = np.linalg.norm(analytic - numeric) / (np.linalg.norm(analytic) + np.linalg.norm(numeric))
    assert error < 1e-3
    print(f"✓ Denoiser gradient relative error {error:.2e} over {len(analytic)} entries")


def test_condition_sensitivity_of_untrained_network():
    model = DenoiserNetwork(tiny_config(), seed=5)
    x = np.random.default_rng(6).standard_normal((2, 2, 8, 8))
    steps = np.array([10, 10])
    conditions = batch(ConditionLabel(1, (1, 0)), ConditionLabel(2, (0, 0)))
    swapped = batch(ConditionLabel(1, (0, 1)), ConditionLabel(2, (1, 1)))
    changed, repeated = condition_sensitivity(model, x, steps, conditions, swapped)
    assert repeated == 0.0
    assert changed > 0.0


def test_classifier_outputs():
    model = ToolClassifier(tiny_classifier_config(), seed=0)
    images = np.random.default_rng(1).uniform(-1, 1, (3, 2, 8, 8))
    images[2] = images[0]
    output = model.classify(images, batch_size=2)
    assert output.tool_probabilities.shape == (3, 2)
    assert output.phase_probabilities.shape == (3, 3)
    assert output.features.shape == (3, 8)
    assert np.allclose(output.phase_probabilities.sum(axis=1), 1.0, atol=1e-6)
    assert np.all((output.tool_probabilities > 0) & (output.tool_probabilities < 1))
    assert np.allclose(output.tool_probabilities[0], output.tool_probabilities[2])
    assert set(np.unique(output.tool_predictions())) <= {0, 1}


def test_classifier_rejects_wrong_shape():
    model = ToolClassifier(tiny_classifier_config())
    with pytest.raises(ShapeError):
        model.classify(np.zeros((1, 3, 8, 8)))


def test_checkpoint_round_trip(tmp_path):
    model = DenoiserNetwork(tiny_config(), seed=7)
    path = save_checkpoint(
        tmp_path / "denoiser.npz", DENOISER, model, model.config.model_dump(mode="json"), meta={"epoch": 3}
    )
    restored, checkpoint = load_denoiser(path)
    assert restored.config == model.config
    assert checkpoint.meta["epoch"] == 3
    for (name, a), (_, b) in zip(model.named_parameters(), restored.named_parameters()):
        assert np.array_equal(a.data, b.data), name

    x = np.random.default_rng(0).standard_normal((1, 2, 8, 8))
    assert np.array_equal(model.predict_noise(x, np.array([5])), restored.predict_noise(x, np.array([5])))


def test_checkpoint_kind_is_checked(tmp_path):
    model = ToolClassifier(tiny_classifier_config())
    path = save_checkpoint(tmp_path / "classifier.npz", CLASSIFIER, model, model.config.model_dump(mode="json"))
    load_classifier(path)
    with pytest.raises(DataError):
        load_denoiser(path)


def test_truncated_checkpoint_is_a_data_error(tmp_path):
    model = ToolClassifier(tiny_classifier_config())
    path = save_checkpoint(tmp_path / "classifier.npz", CLASSIFIER, model, model.config.model_dump(mode="json"))
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(DataError):
        load_checkpoint(path)
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "missing.npz")
