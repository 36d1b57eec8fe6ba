"""Low-rank adapters: W* = W + scaling * A @ B.T on frozen weight matrices."""

import copy
import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from src.core.errors import AlreadyMerged, ShapeError, UnknownTarget, ValidationError
from src.core.tensor import Parameter, Tensor, get_default_dtype, matmul, swapaxes

logger = logging.getLogger(__name__)

WEIGHT_TYPES = ("q", "k", "v", "o", "fc", "proj")
DEFAULT_TARGETS = ("q", "k", "v")
INIT_STD = 0.02


@dataclass
class LoraAdapter:
    target: str
    A: Parameter
    B: Parameter
    rank: int
    scaling: float = 1.0

    def delta(self) -> np.ndarray:
        return self.scaling * (self.A.data @ self.B.data.T)

    def parameters(self) -> list[Parameter]:
        return [self.A, self.B]


def effective_forward(weight: Tensor, adapter: Optional[LoraAdapter], x: Tensor) -> Tensor:
    """
    Apply ``weight`` (d_out x d_in) to the last axis of ``x`` with the adapter added on the side.

    Computes x @ W.T + scaling * (x @ B) @ A.T without materialising W*.
    """
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError("effective_forward", weight.shape, x.shape)
    out = matmul(x, swapaxes(weight, 0, 1))
    if adapter is None:
        return out
    low = matmul(matmul(x, adapter.B), swapaxes(adapter.A, 0, 1))
    return out + (low * adapter.scaling if adapter.scaling != 1.0 else low)


def inject(backbone, targets: Iterable[str], rank: int, seed: int) -> list[LoraAdapter]:
    """
    Attach one adapter to every linear layer of ``backbone`` whose weight type is in ``targets``.

    A starts as seeded Gaussian noise, B as zeros, so the adapted model reproduces
    the frozen one exactly until the first update.
    """
    targets = tuple(dict.fromkeys(targets))
    unknown = [t for t in targets if t not in WEIGHT_TYPES]
    if unknown:
        raise UnknownTarget(f"Unknown LoRA target(s) {unknown}; expected a subset of {WEIGHT_TYPES}")
    if rank < 1:
        raise ValidationError(f"LoRA rank must be positive, got {rank}")
    if getattr(backbone, "merged", False):
        raise AlreadyMerged("Cannot inject adapters into a merged backbone")

    rng = np.random.default_rng(seed)
    dtype = get_default_dtype()
    adapters = []
    for weight_type, linear in backbone.linears():
        if weight_type not in targets:
            continue
        weight = linear.weight
        if not weight.frozen:
            raise ValidationError(f"LoRA target {weight.name} is not frozen")
        d_out, d_in = weight.shape
        if rank > min(d_out, d_in):
            raise ShapeError(f"inject rank {rank}", weight.shape)
        adapter = LoraAdapter(
            target=weight.name,
            A=Parameter(f"{weight.name}.lora.A", rng.normal(0.0, INIT_STD, (d_out, rank)).astype(dtype)),
            B=Parameter(f"{weight.name}.lora.B", np.zeros((d_in, rank), dtype=dtype)),
            rank=rank,
        )
        linear.adapter = adapter
        adapters.append(adapter)

    logger.info(
        f"Injected {len(adapters)} LoRA adapters (rank={rank}, targets={','.join(targets)}, "
        f"trainable={count_parameters(adapters)})"
    )
    return adapters


def count_parameters(adapters: Iterable[LoraAdapter]) -> int:
    return int(sum(a.A.data.size + a.B.data.size for a in adapters))


def merge(backbone, adapters: Iterable[LoraAdapter]):
    """Return a copy of ``backbone`` with every adapter folded into its weight"""
    if getattr(backbone, "merged", False):
        raise AlreadyMerged("Backbone adapters were already merged")
    by_target = {a.target: a for a in adapters}
    merged = copy.deepcopy(backbone)
    for _, linear in merged.linears():
        adapter = by_target.pop(linear.weight.name, None)
        if adapter is not None:
            linear.weight.data = (linear.weight.data + adapter.delta()).astype(linear.weight.dtype)
        linear.adapter = None
    if by_target:
        raise UnknownTarget(f"Adapters without a matching weight: {sorted(by_target)}")
    merged.merged = True
    return merged
