# Copyright (C) 2023 - 2024 ANSYS, Inc. and/or its affiliates.
# SPDX-License-Identifier: MIT
#
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.
"""Provides the ``refseg`` command-line entry point."""
import argparse
import dataclasses
import json
import logging
from pathlib import Path
import sys

from beartype.typing import List, Optional, Sequence

from ansys.tools.referring_segmentation.dataset.generator import generate_dataset
from ansys.tools.referring_segmentation.dataset.io import load_dataset, save_dataset
from ansys.tools.referring_segmentation.errors import ReferringSegmentationError
from ansys.tools.referring_segmentation.inference import (
    ReferringSegmenter,
    evaluate,
    load_predictions,
    save_predictions,
)
from ansys.tools.referring_segmentation.plotter import OverlayPlotter, render_overlay
from ansys.tools.referring_segmentation.training import Trainer, load_checkpoint, save_checkpoint
from ansys.tools.referring_segmentation.utils.config import Settings, load_settings
from ansys.tools.referring_segmentation.utils.logger import RefSegLogger

CHECKPOINT_NAME = "checkpoint.npz"
LOSS_LOG_NAME = "loss_log.json"
PREDICTIONS_NAME = "predictions.json"


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refseg", description="Referring segmentation of objects in synthetic videos."
    )
    parser.add_argument("--verbose", action="store_true", help="Log progress to stderr.")
    parser.add_argument("--log-dir", type=Path, help="Also write logs to this directory.")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="Generate a synthetic dataset.")
    gen.add_argument("--out", type=Path, required=True, help="Dataset directory to write.")
    gen.add_argument("--seed", type=int, default=0, help="Generation seed.")
    gen.add_argument("--config", type=Path, help="YAML settings file.")
    gen.add_argument("--scenes", type=int, help="Number of scenes, overrides the settings.")

    train = commands.add_parser("train", help="Train a model on the train split.")
    train.add_argument("--dataset", type=Path, required=True, help="Dataset directory.")
    train.add_argument(
        "--out", type=Path, required=True, help="Directory for the checkpoint and loss log."
    )
    train.add_argument("--config", type=Path, help="YAML settings file.")
    train.add_argument("--seed", type=int, help="Training seed, overrides the settings.")
    train.add_argument("--epochs", type=int, help="Number of epochs, overrides the settings.")

    evaluate_cmd = commands.add_parser("eval", help="Evaluate a checkpoint on a split.")
    evaluate_cmd.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint file.")
    evaluate_cmd.add_argument("--dataset", type=Path, required=True, help="Dataset directory.")
    evaluate_cmd.add_argument("--out", type=Path, required=True, help="Report directory.")
    evaluate_cmd.add_argument("--split", choices=("train", "test"), default="test")
    evaluate_cmd.add_argument(
        "--config", type=Path, help="YAML settings file for the tracker section."
    )
    evaluate_cmd.add_argument(
        "--no-temporal",
        action="store_true",
        help="Pick the best candidate of each frame independently.",
    )

    infer = commands.add_parser("infer", help="Segment the object a query refers to in one scene.")
    infer.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint file.")
    infer.add_argument("--dataset", type=Path, required=True, help="Dataset directory.")
    infer.add_argument("--scene", type=int, required=True, help="Scene id.")
    infer.add_argument("--query", required=True, help="Referring sentence.")
    infer.add_argument(
        "--out", type=Path, required=True, help="Directory for the prediction and overlays."
    )
    infer.add_argument("--config", type=Path, help="YAML settings file for the tracker section.")

    render = commands.add_parser("render", help="Draw stored predictions over their frames.")
    render.add_argument("--predictions", type=Path, required=True, help="Prediction file.")
    render.add_argument("--dataset", type=Path, required=True, help="Dataset directory.")
    render.add_argument("--out", type=Path, required=True, help="Directory for the overlays.")
    render.add_argument("--sample", type=int, help="Only render this sample id.")
    render.add_argument("--show", action="store_true", help="Also open the overlays in a viewer.")
    return parser


def _configure_logging(verbose: bool, log_dir: Optional[Path]) -> None:
    refseg_logger = RefSegLogger()
    if verbose:
        refseg_logger.set_level(logging.INFO)
        refseg_logger.enable_output()
    if log_dir is not None:
        refseg_logger.add_file_handler(log_dir)


def _tracker_settings(
    base: Settings, config: Optional[Path], no_temporal: bool = False
) -> Settings:
    if config is not None:
        base = base.replace(tracker=load_settings(config).tracker)
    if no_temporal:
        base = base.replace(tracker=dataclasses.replace(base.tracker, use_temporal=False))
    return base


def _gen(args: argparse.Namespace) -> int:
    settings = load_settings(args.config)
    generator = settings.generator
    if args.scenes is not None:
        generator = dataclasses.replace(generator, scenes=args.scenes)
    RefSegLogger().log_settings("gen", settings.replace(generator=generator))
    dataset = generate_dataset(generator, args.seed, settings.runtime.workers)
    save_dataset(dataset, args.out, settings.runtime.workers)
    print(f"Wrote {len(dataset.scenes)} scenes and {len(dataset.samples)} samples to {args.out}")
    return 0


def _train(args: argparse.Namespace) -> int:
    settings = load_settings(args.config)
    training = settings.training
    if args.seed is not None:
        training = dataclasses.replace(training, seed=args.seed)
    if args.epochs is not None:
        training = dataclasses.replace(training, epochs=args.epochs)
    settings = settings.replace(training=training)
    RefSegLogger().log_settings("train", settings)
    dataset = load_dataset(args.dataset, settings.runtime.workers)
    samples = dataset.split("train")
    if not samples:
        raise ReferringSegmentationError(f"Dataset '{args.dataset}' has no training sample.")

    args.out.mkdir(parents=True, exist_ok=True)
    log_path = args.out / LOSS_LOG_NAME
    trainer = Trainer(settings, dataset.vocabulary, workers=settings.runtime.workers)

    def write_log(_) -> None:
        log = [record.to_dict() for record in trainer.history]
        log_path.write_text(json.dumps(log, sort_keys=True, indent=2) + "\n")

    write_log(None)
    trainer.fit(samples, callback=write_log)
    checkpoint = save_checkpoint(args.out / CHECKPOINT_NAME, trainer.model, settings, trainer.step)
    final = trainer.history[-1].loss if trainer.history else float("nan")
    print(f"Trained {len(trainer.history)} epochs, final loss {final:.6f}, checkpoint {checkpoint}")
    return 0


def _eval(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    settings = _tracker_settings(checkpoint.settings, args.config, args.no_temporal)
    RefSegLogger().log_settings("eval", settings)
    dataset = load_dataset(args.dataset, settings.runtime.workers)
    samples = dataset.split(args.split)
    if not samples:
        raise ReferringSegmentationError(f"Split '{args.split}' of '{args.dataset}' is empty.")
    segmenter = ReferringSegmenter(checkpoint.model, settings.tracker)
    report, predictions = evaluate(segmenter, samples, settings.runtime.workers)
    report.write(args.out)
    save_predictions(predictions, args.out / PREDICTIONS_NAME)
    print("\n".join(report.key_values()))
    return 0


def _infer(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    settings = _tracker_settings(checkpoint.settings, args.config)
    dataset = load_dataset(args.dataset, settings.runtime.workers)
    scene = dataset.scene(args.scene)
    prediction = ReferringSegmenter(checkpoint.model, settings.tracker).predict(scene, args.query)
    args.out.mkdir(parents=True, exist_ok=True)
    save_predictions([prediction], args.out / PREDICTIONS_NAME)
    for frame in prediction.frames:
        masks = [] if frame.mask is None else [frame.mask]
        scores = [] if frame.score is None else [frame.score]
        name = f"frame_{frame.frame:02d}.ppm"
        render_overlay(scene.frames[frame.frame], masks, scores, args.out / name)
    print(f"track={prediction.track_id} score={prediction.score:.6f}")
    return 0


def _render(args: argparse.Namespace) -> int:
    predictions = load_predictions(args.predictions)
    if args.sample is not None:
        predictions = [p for p in predictions if p.sample_id == args.sample]
        if not predictions:
            raise ReferringSegmentationError(f"No prediction for sample {args.sample}.")
    dataset = load_dataset(args.dataset)
    args.out.mkdir(parents=True, exist_ok=True)
    viewer = None
    if args.show:
        from ansys.tools.referring_segmentation.backends.pyvista import PyVistaBackend

        viewer = OverlayPlotter(PyVistaBackend())
    written: List[Path] = []
    for prediction in predictions:
        scene = dataset.scene(prediction.scene_id)
        for frame in prediction.frames:
            masks = [] if frame.mask is None else [frame.mask]
            scores = [] if frame.score is None else [frame.score]
            name = f"sample_{prediction.sample_id:05d}_frame_{frame.frame:02d}.ppm"
            path = render_overlay(scene.frames[frame.frame], masks, scores, args.out / name)
            written.append(path)
            if viewer is not None:
                viewer.plot(scene.frames[frame.frame], masks, scores)
    if viewer is not None:
        viewer.show()
    print(f"Wrote {len(written)} overlays to {args.out}")
    return 0


_COMMANDS = {"gen": _gen, "train": _train, "eval": _eval, "infer": _infer, "render": _render}


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run a subcommand and return its exit code.

    Usage errors print the usage text and return a nonzero code. Library errors,
    such as corrupt files, and file system errors, such as an output path that
    is a file, print a one-line description and return 1.
    """
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _configure_logging(args.verbose, args.log_dir)
        return _COMMANDS[args.command](args)
    except (ReferringSegmentationError, OSError) as err:
        print(f"refseg {args.command}: error: {err}", file=sys.stderr)
        return 1
    finally:
        if args.log_dir is not None:
            RefSegLogger().close_file_handlers()


def main() -> None:
    """Console script entry point."""
    sys.exit(cli())
