"""
Video contextualizer: a transformer over one video token, then per event an
event token followed by that event's frame embeddings.

    [v, e_1, f_1^1 .. f_1^T, e_2, f_2^1 .. f_2^T, ...]

Each token gets an additive type embedding. Events and their frames share an
event-position embedding, frames add a frame-position embedding, and the whole
sequence is layer-normalised before the blocks.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.core.errors import ShapeError
from src.core.layers import LayerNorm, Module, TransformerEncoder, normal
from src.core.tensor import (
    Parameter,
    Tensor,
    broadcast_to,
    concat,
    index,
    l2_normalize,
    reshape,
)

logger = logging.getLogger(__name__)

INIT_STD = 0.02


class VcEmbeddingTable(Module):
    def __init__(self, dim: int, max_events: int, max_frames: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.max_events = max_events
        self.max_frames = max_frames

        def table(name, shape):
            return self.add_parameter(Parameter(f"vc.{name}", normal(rng, shape, INIT_STD)))

        self.v_token = table("v_token", (dim,))
        self.e_token = table("e_token", (dim,))
        self.type_v = table("type_v", (dim,))
        self.type_e = table("type_e", (dim,))
        self.type_f = table("type_f", (dim,))
        self.event_pos = table("event_pos", (max_events, dim))
        self.frame_pos = table("frame_pos", (max_frames, dim))
        self.norm = self.add_module(LayerNorm("vc.ln_in", dim))


def assemble_sequence(frame_embs: Tensor, table: VcEmbeddingTable) -> Tensor:
    """
    Build the augmented token sequence.

    Args:
        frame_embs: Tensor of shape (P, T, d) or (B, P, T, d)
        table: Learnable tokens and embeddings

    Returns:
        Tensor of shape (1 + P(1 + T), d), with a leading B axis for batched input
    """
    if frame_embs.ndim not in (3, 4) or frame_embs.shape[-1] != table.dim:
        raise ShapeError("assemble_sequence", frame_embs.shape, ("P", "T", table.dim))
    lead = frame_embs.shape[:-3]
    events, frames, dim = frame_embs.shape[-3:]
    if events > table.max_events or frames > table.max_frames:
        raise ShapeError("assemble_sequence", frame_embs.shape, (table.max_events, table.max_frames, dim))

    event_pos = index(table.event_pos, slice(0, events))
    frame_pos = index(table.frame_pos, slice(0, frames))

    video_token = reshape(table.v_token + table.type_v, (1, dim))
    event_tokens = reshape(table.e_token + table.type_e + event_pos, (events, 1, dim))
    frame_tokens = (
        frame_embs
        + table.type_f
        + reshape(event_pos, (events, 1, dim))
        + reshape(frame_pos, (1, frames, dim))
    )

    video_token = broadcast_to(video_token, lead + (1, dim))
    event_tokens = broadcast_to(event_tokens, lead + (events, 1, dim))
    grouped = concat([event_tokens, frame_tokens], axis=-2)
    body = reshape(grouped, lead + (events * (1 + frames), dim))
    return table.norm(concat([video_token, body], axis=-2))


@dataclass
class VcOutput:
    v_hat: Tensor
    e_hat: Tensor
    f_hat: Tensor


class VideoContextualizer(Module):
    """Full self-attention over the assembled sequence through pre-norm blocks"""

    def __init__(
        self,
        dim: int = 64,
        depth: int = 6,
        heads: int = 4,
        mlp_ratio: int = 4,
        max_events: int = 8,
        max_frames: int = 8,
        seed: int = 0,
    ):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.table = self.add_module(VcEmbeddingTable(dim, max_events, max_frames, rng))
        self.encoder = self.add_module(TransformerEncoder("vc", depth, dim, heads, mlp_ratio, rng))

    def __call__(self, frame_embs: Tensor) -> VcOutput:
        return vc_forward(self, assemble_sequence(frame_embs, self.table), frame_embs.shape[-3:-1])


def vc_forward(vc: VideoContextualizer, seq: Tensor, layout: tuple) -> VcOutput:
    """
    Run the contextualizer and split its output by position.

    Args:
        vc: The contextualizer
        seq: Assembled sequence of shape (..., 1 + P(1 + T), d)
        layout: (P, T) the sequence was assembled from

    Returns:
        VcOutput with normalised v_hat (..., d) and e_hat (..., P, d) and raw f_hat (..., P, T, d)
    """
    events, frames = layout
    if seq.shape[-2] != 1 + events * (1 + frames):
        raise ShapeError("vc_forward", seq.shape, (1 + events * (1 + frames), seq.shape[-1]))
    out = vc.encoder(seq)
    lead = out.shape[:-2]
    dim = out.shape[-1]
    grouped = reshape(index(out, (Ellipsis, slice(1, None), slice(None))), lead + (events, 1 + frames, dim))
    return VcOutput(
        v_hat=l2_normalize(index(out, (Ellipsis, 0, slice(None))), axis=-1),
        e_hat=l2_normalize(index(grouped, (Ellipsis, 0, slice(None))), axis=-1),
        f_hat=index(grouped, (Ellipsis, slice(1, None), slice(None))),
    )
