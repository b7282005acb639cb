"""Pipeline stages behind the command-line subcommands"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from app.conditions.analysis import imbalance_report
from app.conditions.joint_table import JointConditionTable, build_joint_table, rarest_cells, sample_rare_conditions
from app.conditions.labels import AnnotationTable, ConditionBatch, ConditionLabel, read_annotations, toolset_name
from app.config import ScheduleSettings, Settings
from app.data.dataset import (
    ANNOTATIONS,
    Split,
    empty_like,
    export_png,
    from_labels,
    load_dataset,
    save_dataset,
    save_grid,
)
from app.data.syntheye import generate_dataset
from app.diffusion.process import DiffusionProcess
from app.diffusion.schedule import VarianceSchedule, make_linear_schedule
from app.diffusion.trainer import DiffusionTrainer
from app.errors import ShapeError, UserInputError
from app.harness.experiment import audit_disjoint, retraining_experiment
from app.harness.report import ClassifierReport, evaluate_classifier, worst_phases
from app.harness.training import train_classifier
from app.hashing import sha256_npz
from app.metrics.report import compute_metric_report
from app.models.checkpoint import CLASSIFIER, Checkpoint, load_classifier, load_denoiser, save_checkpoint
from app.models.unet import DenoiserConfig, DenoiserNetwork
from app.pipeline.manifest import prepare_output, write_run_manifest

logger = logging.getLogger(__name__)


def read_annotation_source(path: Path) -> AnnotationTable:
    """Annotations from a dataset directory or a bare annotation file"""
    return read_annotations(path / ANNOTATIONS if path.is_dir() else path)


def gen_data(settings: Settings, out_dir: Path, overwrite: bool = False, png: bool = False) -> dict[str, Path]:
    """Generate the SynthEye train and test splits; the test frames continue the train frame indices"""
    data = settings.data
    generator = data.generator.model_copy(update={"seed": settings.seed})
    prepare_output(out_dir, overwrite)
    workers, progress = settings.num_workers, settings.show_progress

    train = generate_dataset(generator, data.train_count, Split.TRAIN, 0, workers, progress)
    test = generate_dataset(generator, data.test_count, Split.TEST, data.train_count, workers, progress)
    echo = generator.model_dump(mode="json")
    outputs = {
        "train": out_dir / Split.TRAIN.value,
        "test": out_dir / Split.TEST.value,
    }
    save_dataset(outputs["train"], train, echo)
    save_dataset(outputs["test"], test, echo)
    if png:
        export_png(train, out_dir / "png" / Split.TRAIN.value)
        export_png(test, out_dir / "png" / Split.TEST.value)

    report = imbalance_report(train.labels(), train.tool_names, train.phase_names)
    report.export(out_dir / "analysis")
    for line in report.summary_lines():
        logger.info(line)
    write_run_manifest(out_dir, "gen-data", settings, {}, outputs)
    return outputs


def denoiser_config(settings: Settings, channels: int, size: int, num_phases: int, num_tools: int) -> DenoiserConfig:
    return settings.model.model_copy(
        update={
            "image_channels": channels,
            "image_size": size,
            "num_phases": num_phases,
            "num_tools": num_tools,
            "num_steps": settings.schedule.num_steps,
        }
    )


def train_diffusion(
    settings: Settings,
    dataset_dir: Path,
    out_dir: Path,
    overwrite: bool = False,
    resume: Path | None = None,
) -> Path:
    """
    Train the conditional denoiser; ``resume`` continues from a checkpoint
    written by an earlier run with the same architecture.
    """
    dataset = load_dataset(dataset_dir)
    channels, size, _ = dataset.image_shape
    config = denoiser_config(settings, channels, size, dataset.num_phases, dataset.num_tools)
    dtype = settings.precision.dtype

    checkpoint: Checkpoint | None = None
    if resume is not None:
        model, checkpoint = load_denoiser(resume, dtype)
        if model.config != config:
            raise UserInputError(f"{resume} was trained with a different architecture or step count")
    else:
        model = DenoiserNetwork(config, seed=settings.seed, dtype=dtype)
    prepare_output(out_dir, overwrite or resume is not None, keep=resume is not None)

    linear = settings.schedule
    schedule = make_linear_schedule(linear.num_steps, linear.beta_start, linear.beta_end)
    trainer = DiffusionTrainer(
        model,
        DiffusionProcess(schedule, model.image_shape),
        settings.guidance,
        settings.training,
        seed=settings.seed,
        output_dir=out_dir,
        run_config=settings.resolved(),
        show_progress=settings.show_progress,
    )
    if checkpoint is not None:
        trainer.restore(checkpoint)
    history = trainer.fit(dataset.images, dataset.conditions)
    final = out_dir / "denoiser.npz"
    if not final.exists():
        trainer.save(final)

    extra: dict[str, object] = {"epochs": trainer.epoch, "steps": trainer.step}
    if history:
        extra["final_loss"] = history[-1].mean_loss
    inputs = {"dataset": dataset_dir, **({"resume": resume} if resume else {})}
    write_run_manifest(out_dir, "train-diffusion", settings, inputs, {"denoiser": final}, extra)
    return final


def train_classifier_stage(
    settings: Settings,
    train_dir: Path,
    test_dir: Path,
    out_dir: Path,
    synthetic_dir: Path | None = None,
    experiment: bool = False,
    overwrite: bool = False,
) -> Path:
    """
    Train and evaluate the tool classifier.

    With ``synthetic_dir`` and without ``experiment`` the classifier trains on
    real plus synthetic frames. With ``experiment`` it trains on real frames
    and the Original / Extended / synthetic-only comparison runs as well.
    """
    train = load_dataset(train_dir)
    test = load_dataset(test_dir)
    synthetic = load_dataset(synthetic_dir) if synthetic_dir else empty_like(train, Split.SYNTHETIC)
    audit_disjoint(train, test, synthetic)
    prepare_output(out_dir, overwrite)
    dtype = settings.precision.dtype

    data = train if experiment else train.concat(synthetic, Split.TRAIN)
    model, history = train_classifier(
        data,
        settings.classifier_training,
        settings.classifier,
        seed=settings.seed,
        dtype=dtype,
        loss_log=out_dir / "loss_log.tsv",
        show_progress=settings.show_progress,
    )
    checkpoint = save_checkpoint(
        out_dir / "classifier.npz",
        CLASSIFIER,
        model,
        model.config.model_dump(mode="json"),
        meta={"config": settings.resolved(), "history": history},
    )
    report = evaluate_classifier(
        model,
        test,
        metadata={"seed": settings.seed, "train_count": len(data), "synthetic_count": len(data) - len(train)},
    )
    report.export(out_dir)

    extra: dict[str, object] = {"f1": report.f1, "auroc": report.auroc, "accuracy": report.accuracy}
    if experiment:
        result = retraining_experiment(
            train,
            test,
            synthetic,
            settings.classifier_training,
            settings.classifier,
            seed=settings.seed,
            worst_n=settings.experiment.worst_n,
            include_oversampling=settings.experiment.include_oversampling,
            num_workers=settings.num_workers,
            dtype=dtype,
            show_progress=settings.show_progress,
        )
        result.export(out_dir / "experiment")
        extra["worst_phases"] = result.worst
        extra["improved_phases"] = result.improved
    inputs = {"train": train_dir, "test": test_dir, **({"synthetic": synthetic_dir} if synthetic_dir else {})}
    write_run_manifest(out_dir, "train-classifier", settings, inputs, {"classifier": checkpoint}, extra)
    return checkpoint


def checkpoint_schedule(checkpoint: Checkpoint, settings: Settings) -> VarianceSchedule:
    """The schedule recorded with the checkpoint, falling back to the current settings"""
    recorded = checkpoint.meta.get("config", {}).get("schedule")
    schedule = settings.schedule if recorded is None else ScheduleSettings(**recorded)
    return make_linear_schedule(schedule.num_steps, schedule.beta_start, schedule.beta_end)


def rarest_phases(table: JointConditionTable, n: int) -> list[int]:
    marginals = table.phase_marginals()
    return sorted(marginals, key=lambda phase: (marginals[phase], phase))[:n]


def grid_conditions(
    table: JointConditionTable, phases: list[int], columns: int
) -> list[tuple[int, ConditionLabel]]:
    """(grid cell index, condition) for the rarest toolsets of each row phase"""
    cells = []
    for row, phase in enumerate(phases):
        for col, toolset in enumerate(rarest_cells(table, phase, columns)):
            cells.append((row * columns + col, ConditionLabel(phase, toolset)))
    return cells


def sample_stage(
    settings: Settings,
    checkpoint_path: Path,
    annotations: Path,
    out_dir: Path,
    count: int | None = None,
    overwrite: bool = False,
    grid: bool = False,
    classifier_report: Path | None = None,
) -> Path:
    """
    Draw rare conditions from the annotations' joint table and generate one
    image per condition; the result is saved as a synthetic dataset.
    """
    dtype = settings.precision.dtype
    model, checkpoint = load_denoiser(checkpoint_path, dtype)
    source = read_annotation_source(annotations)
    if (source.num_tools, source.num_phases) != (model.config.num_tools, model.config.num_phases):
        raise ShapeError(
            "annotation (tools, phases) vs checkpoint",
            (source.num_tools, source.num_phases),
            (model.config.num_tools, model.config.num_phases),
        )
    schedule = checkpoint_schedule(checkpoint, settings)
    if schedule.num_steps != model.config.num_steps:
        raise UserInputError(f"schedule has {schedule.num_steps} steps, checkpoint expects {model.config.num_steps}")
    sampling = settings.sampling
    count = count if count is not None else (sampling.count or settings.data.test_count)
    if count < 1:
        raise UserInputError(f"sample count must be positive, got {count}")
    prepare_output(out_dir, overwrite)

    table = build_joint_table(source.labels)
    rng = np.random.default_rng([settings.seed, 2])
    labels = sample_rare_conditions(table, count, rng, sampling.mode, sampling.phase)
    process = DiffusionProcess(schedule, model.image_shape)
    sample_args = {
        "num_inference_steps": sampling.num_inference_steps,
        "guidance_weight": settings.guidance.weight,
        "sampler": sampling.sampler,
        "seed": settings.seed,
        "batch_size": sampling.batch_size,
        "num_workers": settings.num_workers,
        "show_progress": settings.show_progress,
    }
    images = process.sample(model, count, ConditionBatch.from_labels(labels, source.num_tools), **sample_args)
    dataset = from_labels(images, labels, Split.SYNTHETIC, source.tool_names, source.phase_names)
    generation = {
        "guidance_weight": settings.guidance.weight,
        "num_inference_steps": sampling.num_inference_steps,
        "sampler": sampling.sampler.value,
        "mode": sampling.mode.value,
        "phase": sampling.phase,
        "seed": settings.seed,
        "checkpoint_sha256": sha256_npz(checkpoint_path),
    }
    save_dataset(out_dir, dataset, generation, overwrite=True)

    outputs = {"synthetic": out_dir}
    if grid:
        if classifier_report is not None:
            rows = worst_phases(ClassifierReport.from_summary(classifier_report), sampling.grid_phases)
        else:
            rows = rarest_phases(table, sampling.grid_phases)
        cells = grid_conditions(table, rows, sampling.grid_toolsets)
        canvas = np.full((len(rows) * sampling.grid_toolsets, *model.image_shape), -1.0)
        if cells:
            grid_labels = [label for _, label in cells]
            grid_batch = ConditionBatch.from_labels(grid_labels, source.num_tools)
            tiles = process.sample(model, len(cells), grid_batch, **sample_args)
            canvas[[index for index, _ in cells]] = tiles
        outputs["grid"] = save_grid(canvas, len(rows), sampling.grid_toolsets, out_dir / "grid.png")
        logger.info(
            "Grid rows: " + "; ".join(
                f"{source.phase_names[label.phase]} {toolset_name(label.toolset, source.tool_names)}"
                for _, label in cells
            )
        )
    write_run_manifest(
        out_dir, "sample", settings, {"checkpoint": checkpoint_path, "annotations": annotations}, outputs, generation
    )
    return out_dir


def evaluate_stage(
    settings: Settings,
    real_dir: Path,
    synthetic_dir: Path,
    classifier_path: Path,
    out_dir: Path,
    overwrite: bool = False,
    noise_baseline: bool = False,
) -> Path:
    """FID, KID, IS, CF1 and diversity of the synthetic set against the real one"""
    real = load_dataset(real_dir)
    generated = load_dataset(synthetic_dir)
    classifier, _ = load_classifier(classifier_path, settings.precision.dtype)
    prepare_output(out_dir, overwrite)
    report = compute_metric_report(
        classifier,
        real,
        generated,
        sha256_npz(classifier_path),
        settings.metrics,
        seed=settings.seed,
        noise_baseline=noise_baseline,
    )
    path = report.write(out_dir / "metrics.json")
    inputs = {"real": real_dir, "synthetic": synthetic_dir, "classifier": classifier_path}
    write_run_manifest(out_dir, "evaluate", settings, inputs, {"metrics": path})
    return path


def analyze_stage(
    settings: Settings,
    annotations: Path,
    out_dir: Path,
    overwrite: bool = False,
    classifier_report: Path | None = None,
    rarest: int = 3,
) -> list[Path]:
    """Imbalance tables, rarest toolsets per phase and, given a report, the worst phases"""
    source = read_annotation_source(annotations)
    prepare_output(out_dir, overwrite)
    report = imbalance_report(source.labels, source.tool_names, source.phase_names)
    written = report.export(out_dir)
    for line in report.summary_lines():
        logger.info(line)

    table = build_joint_table(source.labels)
    rows = [
        {
            "phase": phase,
            "phase_name": source.phase_names[phase],
            "rank": rank,
            "toolset": "".join(str(f) for f in toolset),
            "toolset_name": toolset_name(toolset, source.tool_names),
            "joint_probability": table.probability(toolset, phase),
        }
        for phase in table.phases
        for rank, toolset in enumerate(rarest_cells(table, phase, rarest), start=1)
    ]
    rarest_path = out_dir / "rarest_cells.csv"
    pd.DataFrame(rows).to_csv(rarest_path, index=False)
    written.append(rarest_path)

    inputs = {"annotations": annotations}
    if classifier_report is not None:
        scores = ClassifierReport.from_summary(classifier_report)
        ranked = worst_phases(scores, len(scores.per_phase_f1))
        worst_path = out_dir / "worst_phases.csv"
        pd.DataFrame(
            {
                "phase": ranked,
                "phase_name": [source.phase_names[p] for p in ranked],
                "f1": [scores.per_phase_f1[p] for p in ranked],
            }
        ).to_csv(worst_path, index=False)
        written.append(worst_path)
        inputs["classifier_report"] = classifier_report
    write_run_manifest(out_dir, "analyze", settings, inputs, {"analysis": out_dir / "phase_frames.csv"})
    return written
