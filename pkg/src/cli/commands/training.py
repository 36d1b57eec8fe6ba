import argparse
import json
import logging
from pathlib import Path

import pandas as pd

from src.cli.commands.common import CONFIG_NAME, add_config_arguments, add_frame_arguments, emit, frame_store, load_config
from src.core.config import TrainConfig, apply_overrides, parse_value, save_config
from src.core.errors import ConfigError
from src.core.evaluation import video_retrieval
from src.core.model import FigClipModel
from src.core.tensor import precision
from src.core.trainer import Trainer
from src.services.annotation_service import AnnotationService
from src.storage.files import atomic_write

logger = logging.getLogger(__name__)


def train(args: argparse.Namespace) -> int:
    config = load_config(args)
    if args.progress:
        config.progress = True
    dataset = AnnotationService.load_dataset(args.annotations)
    args.out.mkdir(parents=True, exist_ok=True)
    save_config(args.out / CONFIG_NAME, config)

    trainer = Trainer(dataset, config, frame_store(args, config), args.out)
    result = trainer.run(resume_from=args.resume)
    emit(
        {
            "checkpoints": [str(p) for p in result.checkpoints],
            "log": str(result.log_path),
            "steps": result.steps,
            "final_loss": result.final_loss,
            "epochs": result.summary.to_dict(orient="records"),
            "lora_parameters": trainer.model.lora_parameter_count,
            "trainable_parameters": trainer.model.trainable_parameter_count,
        },
        args.report,
    )
    return 0


def _event_metrics(model: FigClipModel, dataset, store) -> dict:
    visuals = model.event_embeddings(dataset, store)
    texts = model.event_prompt_embeddings(dataset)
    return video_retrieval(visuals, texts)


def sweep(args: argparse.Namespace) -> int:
    """
    Train one run per value of ``--axis`` and tabulate final loss, held-in event
    retrieval and (with --eval-annotations) held-out video retrieval.
    """
    base = load_config(args)
    values = parse_value(args.values)
    if not isinstance(values, list) or not values:
        raise ConfigError(f"--values must be a non-empty JSON list, got {args.values!r}")
    dataset = AnnotationService.load_dataset(args.annotations)
    heldout = AnnotationService.load_dataset(args.eval_annotations) if args.eval_annotations else None
    store = frame_store(args, base)

    rows = []
    for value in values:
        payload = apply_overrides(base.to_dict(), [f"{args.axis}={json.dumps(value)}"])
        config = TrainConfig.from_dict(payload)
        label = json.dumps(value).replace(" ", "").replace('"', "")
        run_dir = args.out / f"{args.axis}={label}"
        run_dir.mkdir(parents=True, exist_ok=True)
        save_config(run_dir / CONFIG_NAME, config)
        logger.info(f"Sweep {args.axis}={value}: training into {run_dir}")

        trainer = Trainer(dataset, config, store, run_dir)
        result = trainer.run()
        row = {
            "axis": args.axis,
            "value": label,
            "final_loss": result.final_loss,
            "lora_parameters": trainer.model.lora_parameter_count,
            "trainable_parameters": trainer.model.trainable_parameter_count,
        }
        with precision(config.precision):
            row.update({f"event_{k}": v for k, v in _event_metrics(trainer.model, dataset, store).items()})
            if heldout is not None:
                videos = trainer.model.video_embeddings(heldout, store)
                queries = trainer.model.video_prompt_embeddings(heldout)
                row.update({f"video_{k}": v for k, v in video_retrieval(videos, queries).items()})
        rows.append(row)

    table = pd.DataFrame.from_records(rows)
    args.out.mkdir(parents=True, exist_ok=True)
    with atomic_write(args.out / "sweep.csv", mode="w", encoding="utf-8") as handle:
        table.to_csv(handle, index=False)
    records = table.to_dict(orient="records")
    emit(records, args.out / "sweep.json")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "train",
        help="post-pretrain adapters and the contextualizer",
        description="Config keys mirror TrainConfig fields, e.g. lora_rank, lora_targets, nvr, nrn, "
        "lambda_video (alias lambda), batch_strategy, act_p, extra_negatives, loss_terms, "
        "adaptation (lora, partial or full) and frozen_blocks.",
    )
    parser.add_argument("--annotations", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="run directory for checkpoints and trainlog.jsonl")
    parser.add_argument("--resume", type=Path, help="checkpoint to continue from")
    parser.add_argument("--progress", action="store_true", help="show a progress bar on stderr")
    parser.add_argument("--report", type=Path, help="also write the JSON summary here")
    add_config_arguments(parser)
    add_frame_arguments(parser)
    parser.set_defaults(handler=train)

    parser = subparsers.add_parser("sweep", help="train once per value of a config field and tabulate results")
    parser.add_argument("--annotations", type=Path, required=True)
    parser.add_argument("--eval-annotations", type=Path, help="held-out split for video retrieval")
    parser.add_argument("--axis", required=True, help="TrainConfig field to vary, e.g. lora_rank")
    parser.add_argument("--values", required=True, help="JSON list of values, e.g. '[1, 4, 64]'")
    parser.add_argument("--out", type=Path, required=True)
    add_config_arguments(parser)
    add_frame_arguments(parser)
    parser.set_defaults(handler=sweep)
