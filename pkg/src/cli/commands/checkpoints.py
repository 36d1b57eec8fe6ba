import argparse
from pathlib import Path

import numpy as np

from src.cli.commands.common import emit
from src.storage.checkpoint import load_checkpoint

LORA_MARKER = ".lora."
STATE_PREFIXES = ("optim.", "meta.")


def inspect_checkpoint(args: argparse.Namespace) -> int:
    """Name, shape and l2 norm of every stored tensor, plus LoRA parameter counts"""
    state = load_checkpoint(args.checkpoint)
    tensors = []
    lora_total = 0
    lora_by_target: dict[str, int] = {}
    for name, value in state.items():
        tensors.append(
            {"name": name, "shape": list(value.shape), "norm": float(np.linalg.norm(value.astype(np.float64)))}
        )
        if LORA_MARKER in name and not name.startswith(STATE_PREFIXES):
            target = name.split(LORA_MARKER, 1)[0]
            lora_by_target[target] = lora_by_target.get(target, 0) + int(value.size)
            lora_total += int(value.size)
    model_tensors = [t for t in tensors if not t["name"].startswith(STATE_PREFIXES)]
    emit(
        {
            "checkpoint": str(args.checkpoint),
            "tensors": tensors,
            "parameters": int(sum(np.prod(t["shape"], dtype=np.int64) for t in model_tensors)),
            "lora": {"parameters": lora_total, "adapters": len(lora_by_target), "per_target": lora_by_target},
        },
        args.out,
    )
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("inspect-ckpt", help="list checkpoint tensors as JSON")
    parser.add_argument("checkpoint", type=Path)
    parser.add_argument("--out", type=Path)
    parser.set_defaults(handler=inspect_checkpoint)
