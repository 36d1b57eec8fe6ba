"""Argument groups and loaders shared by several commands."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from src.core.config import TrainConfig, apply_overrides
from src.core.encoders import FrameStore
from src.core.errors import ConfigError, ValidationError
from src.core.model import FigClipModel
from src.storage.embeddings import load_embeddings
from src.storage.files import atomic_write

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.json"


def env_int(name: str) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got '{raw}'") from None


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file whose keys are TrainConfig field names")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config field; VALUE is parsed as JSON when possible",
    )
    parser.add_argument("--seed", type=int, help="overrides config seed (default: $FIGCLIP_SEED or 0)")
    parser.add_argument("--threads", type=int, help="worker threads (default: $FIGCLIP_THREADS or CPU count)")


def add_frame_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--features", type=Path, help="FGEMB1 file resolving emb:<row> frame refs")
    parser.add_argument("--frames-root", type=Path, help="directory resolving .npy frame refs")


def add_model_arguments(parser: argparse.ArgumentParser) -> None:
    """Checkpoint-mode evaluation: weights, their config and the frames to encode"""
    parser.add_argument("--checkpoint", type=Path, help="FGCKPT1 file; omitted means the untrained model")
    parser.add_argument("--annotations", type=Path, help="annotation JSON to embed")
    add_config_arguments(parser)
    add_frame_arguments(parser)


def load_config(args: argparse.Namespace) -> TrainConfig:
    """
    Resolve the run configuration.

    Precedence, lowest first: dataclass defaults, $FIGCLIP_SEED/$FIGCLIP_THREADS,
    the config file (or ``config.json`` next to ``--checkpoint``), ``--set``, then
    the ``--seed``/``--threads`` flags.
    """
    path = args.config
    checkpoint = getattr(args, "checkpoint", None)
    if path is None and checkpoint is not None and (checkpoint.parent / CONFIG_NAME).exists():
        path = checkpoint.parent / CONFIG_NAME
        logger.info(f"Using config {path}")

    payload = {}
    for key, env in (("seed", "FIGCLIP_SEED"), ("threads", "FIGCLIP_THREADS")):
        value = env_int(env)
        if value is not None:
            payload[key] = value
    if path is not None:
        loaded = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        payload.update(loaded)
    payload = apply_overrides(payload, args.overrides)
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.threads is not None:
        payload["threads"] = args.threads
    if payload.get("threads") is None:
        payload["threads"] = os.cpu_count() or 1
    return TrainConfig.from_dict(payload)


def frame_store(args: argparse.Namespace, config: TrainConfig) -> FrameStore:
    matrix = load_embeddings(args.features) if args.features is not None else None
    return FrameStore(config.tokens, config.feature_dim, matrix=matrix, root=args.frames_root)


def build_model(args: argparse.Namespace, config: TrainConfig) -> FigClipModel:
    """Fresh model from ``config``, with weights from ``--checkpoint`` when given"""
    if args.checkpoint is None:
        logger.info("No checkpoint given; evaluating the untrained adapters")
        return FigClipModel(config)
    return FigClipModel.from_checkpoint(args.checkpoint, config)


def require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise ValidationError(f"{args.command} needs {' and '.join(missing)}")


def emit(report, out: Optional[Path] = None) -> None:
    """Print ``report`` as JSON on stdout and mirror it to ``out``"""
    rendered = json.dumps(report, indent=2, sort_keys=True)
    sys.stdout.write(rendered + "\n")
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        with atomic_write(out, mode="w", encoding="utf-8") as handle:
            handle.write(rendered + "\n")
        logger.info(f"Wrote report to {out}")
