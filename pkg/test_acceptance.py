"""Desk-scale runs on the default settings: retraining gains, conditioning fidelity and the guidance effect

These train full-size models on 5k frames per seed and are deselected by
default; run them with ``pytest -m acceptance``.
"""

import json

import numpy as np
import pytest

from app.conditions import build_joint_table, read_annotations
from app.data.dataset import ANNOTATIONS
from main import main

SEEDS = (0, 1, 2)

pytestmark = [pytest.mark.slow, pytest.mark.acceptance]


def cli(root, seed, *args, weight=None):
    overrides = [f"seed={seed}", "show_progress=false", f"output_dir={root}"]
    if weight is not None:
        overrides.append(f"guidance.weight={weight}")
    assert main([*(item for value in overrides for item in ("--set", value)), *args]) == 0


def metric(values, name):
    return next(entry["value"] for entry in values if entry["name"] == name)


def run_seed(root, seed):
    data = root / "data"
    cli(root, seed, "gen-data")
    cli(root, seed, "train-diffusion", "--data", str(data / "train"))
    checkpoint = str(root / "diffusion" / "denoiser.npz")
    train = str(data / "train")
    sample = ["sample", "--checkpoint", checkpoint, "--annotations", train]
    cli(root, seed, *sample)
    cli(root, seed, *sample, "--out", str(root / "unguided"), weight=0)
    experiment = ["--train", train, "--test", str(data / "test"), "--synthetic", str(root / "synthetic")]
    cli(root, seed, "train-classifier", *experiment, "--experiment")

    classifier = str(root / "classifier" / "classifier.npz")
    metrics = {}
    for name in ("synthetic", "unguided"):
        out = root / f"metrics_{name}"
        inputs = ["--real", str(data / "test"), "--synthetic", str(root / name), "--classifier", classifier]
        cli(root, seed, "evaluate", *inputs, "--noise-baseline", "--out", str(out))
        metrics[name] = json.loads((out / "metrics.json").read_text())

    summary = json.loads((root / "classifier" / "experiment" / "experiment.json").read_text())
    table = build_joint_table(read_annotations(data / "train" / ANNOTATIONS).labels)
    marginals = table.phase_marginals()
    rarest = sorted(marginals, key=lambda phase: (marginals[phase], phase))[:2]
    manifests = {
        name: json.loads((root / name / "manifest.json").read_text())["content_hash"]
        for name in ("synthetic", "unguided")
    }
    return {"experiment": summary["overall"], "metrics": metrics, "rarest": rarest, "hashes": manifests}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return {seed: run_seed(tmp_path_factory.mktemp(f"seed{seed}"), seed) for seed in SEEDS}


def rare_phase_f1(report, phases):
    return float(np.mean([report["per_phase_f1"][str(phase)] for phase in phases]))


def test_extended_training_helps_rare_phases(runs):
    gains = 0
    for seed, run in runs.items():
        overall = run["experiment"]
        original, extended, synthetic_only = overall["original"], overall["extended"], overall["cas"]
        if rare_phase_f1(extended, run["rarest"]) > rare_phase_f1(original, run["rarest"]):
            gains += 1
        assert extended["f1"] >= original["f1"] - 0.005, seed
        assert synthetic_only["f1"] < min(original["f1"], extended["f1"]), seed
    assert gains >= 2
    print(f"✓ Extended training improved the two rarest phases in {gains} of {len(runs)} seeds")


def test_generated_frames_beat_the_noise_floor(runs):
    for seed, run in runs.items():
        report = run["metrics"]["synthetic"]
        noise = report["baselines"]["noise"]
        assert metric(report["metrics"], "cf1") >= metric(noise, "cf1") + 0.2, seed
        assert metric(report["metrics"], "fid") < 0.5 * metric(noise, "fid"), seed


def test_guidance_weight_sharpens_conditioning(runs):
    for seed, run in runs.items():
        assert run["hashes"]["synthetic"] != run["hashes"]["unguided"], seed
        guided = metric(run["metrics"]["synthetic"]["metrics"], "cf1")
        unguided = metric(run["metrics"]["unguided"]["metrics"], "cf1")
        assert guided >= unguided, seed
        print(f"✓ Seed {seed}: CF1 {unguided:.3f} at w=0, {guided:.3f} at w=2")
