"""Command-line tests: exit codes, run manifests and a tiny end-to-end pipeline"""

import json

import pytest

from app.data import load_dataset
from app.pipeline import RUN_MANIFEST
from main import main

TINY = [
    "seed=1",
    "show_progress=false",
    "data.train_count=24",
    "data.test_count=12",
    "data.generator.image_size=8",
    "data.generator.channels=1",
    "data.generator.num_tools=3",
    "data.generator.num_phases=3",
    "schedule.num_steps=10",
    "schedule.beta_end=0.2",
    "model.base_width=4",
    "model.channel_mults=[1,2]",
    "model.blocks_per_level=1",
    "model.embedding_dim=8",
    "model.num_groups=2",
    "training.epochs=1",
    "training.batch_size=12",
    "sampling.num_inference_steps=5",
    "sampling.count=6",
    "sampling.grid_phases=2",
    "sampling.grid_toolsets=2",
    "classifier.widths=[4,8]",
    "classifier.num_groups=2",
    "classifier_training.epochs=1",
    "classifier_training.batch_size=12",
    "metrics.kid_subsets=3",
    "metrics.kid_subset_size=4",
    "metrics.is_splits=2",
    "metrics.diversity_pairs=20",
]


def cli(tmp_path, *args):
    options = [item for override in [*TINY, f"output_dir={tmp_path}"] for item in ("--set", override)]
    return main([*options, *args])


def run_manifest(directory):
    return json.loads((directory / RUN_MANIFEST).read_text())


def test_gen_data_writes_splits_and_manifest(tmp_path):
    assert cli(tmp_path, "gen-data") == 0
    data = tmp_path / "data"
    train = load_dataset(data / "train")
    test = load_dataset(data / "test")
    assert len(train) == 24 and len(test) == 12
    assert test.frame_ids[0] == "test-000024"
    assert (data / "analysis" / "phase_frames.csv").exists()

    manifest = run_manifest(data)
    assert manifest["command"] == "gen-data"
    assert manifest["seed"] == 1
    assert manifest["config"]["data"]["train_count"] == 24
    assert set(manifest["outputs"]) == {"train", "test"}


def test_gen_data_is_reproducible(tmp_path):
    assert cli(tmp_path, "gen-data", "--out", str(tmp_path / "a")) == 0
    assert cli(tmp_path, "gen-data", "--out", str(tmp_path / "b")) == 0
    first, second = run_manifest(tmp_path / "a"), run_manifest(tmp_path / "b")
    assert first["outputs"]["train"]["sha256"] == second["outputs"]["train"]["sha256"]
    assert first["config_hash"] == second["config_hash"]


def test_existing_output_needs_overwrite(tmp_path):
    assert cli(tmp_path, "gen-data") == 0
    assert cli(tmp_path, "gen-data") == 2
    assert cli(tmp_path, "--overwrite", "gen-data") == 0


def test_user_and_data_errors_map_to_exit_codes(tmp_path):
    assert main(["--config", str(tmp_path / "missing.env"), "gen-data"]) == 2
    assert cli(tmp_path, "--set", "schedule.num_steps=0", "gen-data") == 2
    assert cli(tmp_path, "--set", "seed", "gen-data") == 2
    assert cli(tmp_path, "train-diffusion", "--data", str(tmp_path / "nowhere")) == 3
    with pytest.raises(SystemExit):
        main(["sample"])


@pytest.mark.slow
def test_full_pipeline(tmp_path):
    data = tmp_path / "data"
    assert cli(tmp_path, "gen-data") == 0
    assert cli(tmp_path, "train-diffusion", "--data", str(data / "train")) == 0
    checkpoint = tmp_path / "diffusion" / "denoiser.npz"
    assert checkpoint.exists()
    assert run_manifest(tmp_path / "diffusion")["epochs"] == 1

    assert cli(tmp_path, "sample", "--checkpoint", str(checkpoint), "--annotations", str(data / "train"), "--grid") == 0
    synthetic = load_dataset(tmp_path / "synthetic")
    assert len(synthetic) == 6
    assert synthetic.images.min() >= -1.0 and synthetic.images.max() <= 1.0
    assert (tmp_path / "synthetic" / "grid.png").exists()
    assert run_manifest(tmp_path / "synthetic")["sampler"] == "ddim"

    assert (
        cli(
            tmp_path,
            "train-classifier",
            "--train",
            str(data / "train"),
            "--test",
            str(data / "test"),
            "--synthetic",
            str(tmp_path / "synthetic"),
            "--experiment",
        )
        == 0
    )
    classifier = tmp_path / "classifier"
    assert (classifier / "report.json").exists()
    assert (classifier / "experiment" / "phase_deltas.csv").exists()

    assert (
        cli(
            tmp_path,
            "evaluate",
            "--real",
            str(data / "test"),
            "--synthetic",
            str(tmp_path / "synthetic"),
            "--classifier",
            str(classifier / "classifier.npz"),
            "--noise-baseline",
        )
        == 0
    )
    metrics = json.loads((tmp_path / "metrics" / "metrics.json").read_text())
    assert [m["name"] for m in metrics["metrics"]] == ["fid", "kid", "inception_score", "cf1", "diversity"]
    assert "noise" in metrics["baselines"]

    report = classifier / "report.json"
    assert cli(tmp_path, "analyze", "--annotations", str(data / "train"), "--report", str(report)) == 0
    assert (tmp_path / "analysis" / "rarest_cells.csv").exists()
    assert (tmp_path / "analysis" / "worst_phases.csv").exists()

    resampled = tmp_path / "resampled"
    args = ["sample", "--checkpoint", str(checkpoint), "--annotations", str(data / "train"), "--out", str(resampled)]
    assert cli(tmp_path, *args) == 0
    assert load_dataset(resampled).content_hash() == synthetic.content_hash()

    unguided = tmp_path / "unguided"
    args = [*args[:-1], str(unguided)]
    assert cli(tmp_path, "--set", "guidance.weight=0", *args) == 0
    assert load_dataset(unguided).content_hash() != synthetic.content_hash()
    assert run_manifest(unguided)["guidance_weight"] == 0.0
    print("✓ Pipeline ran end to end and resampling reproduced the synthetic set")
