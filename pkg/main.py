"""Command-line entry point of the diffusion pipeline"""

import argparse
import logging
import sys
from pathlib import Path

from app.config import Settings, load_settings
from app.errors import PipelineError
from app.pipeline import (
    analyze_stage,
    evaluate_stage,
    gen_data,
    sample_stage,
    train_classifier_stage,
    train_diffusion,
)

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Generate SynthEye data, train the guided denoiser, sample rare conditions and evaluate them.",
    )
    parser.add_argument("--config", type=Path, help="key-value config file (dotenv syntax, nested keys joined by __)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one setting, e.g. --set training.epochs=5 (repeatable)",
    )
    parser.add_argument("--overwrite", action="store_true", help="replace an existing output directory")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="generate SynthEye train and test splits")
    gen.add_argument("--out", type=Path, help="output directory (default: <output_dir>/data)")
    gen.add_argument("--png", action="store_true", help="also export every frame as PNG")

    diffusion = commands.add_parser("train-diffusion", help="train the conditional denoiser")
    diffusion.add_argument("--data", type=Path, required=True, help="training dataset directory")
    diffusion.add_argument("--out", type=Path, help="output directory (default: <output_dir>/diffusion)")
    diffusion.add_argument("--resume", type=Path, help="denoiser checkpoint to continue from")

    classifier = commands.add_parser("train-classifier", help="train and evaluate the tool classifier")
    classifier.add_argument("--train", type=Path, required=True, help="real training dataset directory")
    classifier.add_argument("--test", type=Path, required=True, help="test dataset directory")
    classifier.add_argument("--synthetic", type=Path, help="synthetic dataset directory")
    classifier.add_argument(
        "--experiment", action="store_true", help="run the Original / Extended / synthetic-only comparison"
    )
    classifier.add_argument("--out", type=Path, help="output directory (default: <output_dir>/classifier)")

    sample = commands.add_parser("sample", help="generate images for rare phase/toolset conditions")
    sample.add_argument("--checkpoint", type=Path, required=True, help="denoiser checkpoint")
    sample.add_argument(
        "--annotations", type=Path, required=True, help="dataset directory or annotation file for the joint table"
    )
    sample.add_argument("--count", type=int, help="number of images (default: sampling.count or the test split size)")
    sample.add_argument("--grid", action="store_true", help="also render a worst-phase by rarest-toolset grid")
    sample.add_argument("--report", type=Path, help="classifier report.json ranking the grid rows")
    sample.add_argument("--out", type=Path, help="output directory (default: <output_dir>/synthetic)")

    evaluate = commands.add_parser("evaluate", help="score a synthetic set against real frames")
    evaluate.add_argument("--real", type=Path, required=True, help="real dataset directory")
    evaluate.add_argument("--synthetic", type=Path, required=True, help="synthetic dataset directory")
    evaluate.add_argument("--classifier", type=Path, required=True, help="classifier checkpoint")
    evaluate.add_argument("--noise-baseline", action="store_true", help="also score uniform noise images")
    evaluate.add_argument("--out", type=Path, help="output directory (default: <output_dir>/metrics)")

    analyze = commands.add_parser("analyze", help="tabulate phase and toolset imbalance")
    analyze.add_argument("--annotations", type=Path, required=True, help="dataset directory or annotation file")
    analyze.add_argument("--report", type=Path, help="classifier report.json for the worst-phase ranking")
    analyze.add_argument("--rarest", type=int, default=3, help="rarest toolsets listed per phase")
    analyze.add_argument("--out", type=Path, help="output directory (default: <output_dir>/analysis)")
    return parser


def run(args: argparse.Namespace, settings: Settings) -> None:
    def out(default: str) -> Path:
        return args.out or settings.output_dir / default

    if args.command == "gen-data":
        gen_data(settings, out("data"), args.overwrite, png=args.png)
    elif args.command == "train-diffusion":
        train_diffusion(settings, args.data, out("diffusion"), args.overwrite, resume=args.resume)
    elif args.command == "train-classifier":
        train_classifier_stage(
            settings, args.train, args.test, out("classifier"), args.synthetic, args.experiment, args.overwrite
        )
    elif args.command == "sample":
        sample_stage(
            settings,
            args.checkpoint,
            args.annotations,
            out("synthetic"),
            args.count,
            args.overwrite,
            args.grid,
            args.report,
        )
    elif args.command == "evaluate":
        evaluate_stage(
            settings, args.real, args.synthetic, args.classifier, out("metrics"), args.overwrite, args.noise_baseline
        )
    elif args.command == "analyze":
        analyze_stage(settings, args.annotations, out("analysis"), args.overwrite, args.report, args.rarest)


def main(argv: list[str] | None = None) -> int:
    """Run one subcommand; returns the process exit code"""
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config, args.overrides)
        # Configure logging
        logging.basicConfig(
            level=settings.log_level,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )
        run(args, settings)
    except PipelineError as exc:
        logging.basicConfig(format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        logger.error(f"{type(exc).__name__}: {exc}")
        return exc.exit_code
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
