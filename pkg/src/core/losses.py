"""
Contrastive objectives.

Every term is a symmetric InfoNCE: visual->text plus text->visual, each the
mean over rows of -log softmax(logits)[i, i]. Hard negatives are textual, so by
default they only widen the visual->text denominators.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from src.core.contextualizer import VcOutput
from src.core.errors import ShapeError, ValidationError
from src.core.tensor import (
    Tensor,
    concat,
    index,
    l2_normalize,
    log_softmax,
    matmul,
    mean,
    reshape,
    swapaxes,
)

logger = logging.getLogger(__name__)

TERMS = ("ce", "cv", "vce", "vcv", "actp")
MASKED_LOGIT = -1e9

Scale = Union[Tensor, float]


def _scaled(logits: Tensor, scale: Scale) -> Tensor:
    return logits * scale


def similarity(query: Tensor, keys: Tensor, scale: Scale = 1.0) -> Tensor:
    if query.ndim != 2 or keys.ndim != 2 or query.shape[1] != keys.shape[1]:
        raise ShapeError("similarity", query.shape, keys.shape)
    return _scaled(matmul(query, swapaxes(keys, 0, 1)), scale)


def negative_logits(
    query: Tensor,
    extra_neg: Optional[Tensor] = None,
    extra_mask: Optional[np.ndarray] = None,
    shared_neg: Optional[Tensor] = None,
    scale: Scale = 1.0,
) -> Optional[Tensor]:
    """
    Logits of ``query`` rows against additional negatives.

    Args:
        query: (N, d)
        extra_neg: (N, H, d) negatives private to each row
        extra_mask: (N, H) booleans, False entries are excluded
        shared_neg: (M, d) negatives added to every row

    Returns:
        (N, H + M) logits, or None when there are no extra negatives
    """
    parts = []
    n, d = query.shape
    if extra_neg is not None:
        if extra_neg.ndim != 3 or extra_neg.shape[0] != n or extra_neg.shape[2] != d:
            raise ShapeError("info_nce extra negatives", query.shape, extra_neg.shape)
        h = extra_neg.shape[1]
    if extra_neg is not None and h:
        private = reshape(matmul(reshape(query, (n, 1, d)), swapaxes(extra_neg, 1, 2)), (n, h))
        private = _scaled(private, scale)
        if extra_mask is not None:
            mask = np.asarray(extra_mask, dtype=bool)
            if mask.shape != (n, h):
                raise ShapeError("info_nce extra mask", (n, h), mask.shape)
            private = private + Tensor(np.where(mask, 0.0, MASKED_LOGIT).astype(query.dtype))
        parts.append(private)
    if shared_neg is not None and shared_neg.shape[0]:
        parts.append(similarity(query, shared_neg, scale))
    if not parts:
        return None
    return parts[0] if len(parts) == 1 else concat(parts, axis=1)


def nce_from_logits(logits: Tensor, extra_logits: Optional[Tensor] = None) -> Tensor:
    """Mean over rows of -log softmax, the positive of row i sitting in column i"""
    n = logits.shape[0]
    if logits.ndim != 2 or logits.shape[1] != n:
        raise ShapeError("info_nce logits", logits.shape)
    full = logits if extra_logits is None else concat([logits, extra_logits], axis=1)
    diagonal = index(log_softmax(full, axis=1), (np.arange(n), np.arange(n)))
    return -mean(diagonal)


def info_nce(
    query: Tensor,
    keys: Tensor,
    extra_neg: Optional[Tensor] = None,
    scale: Scale = 1.0,
    extra_mask: Optional[np.ndarray] = None,
    shared_neg: Optional[Tensor] = None,
) -> Tensor:
    """
    One-directional InfoNCE; row i of ``keys`` is the positive for query i.

    Args:
        query: (N, d) unit rows
        keys: (N, d) unit rows
        extra_neg: Optional (N, H, d) negatives added to each row's denominator
        scale: Logit scale, a float or a scalar Tensor
        extra_mask: Optional (N, H) validity mask for ``extra_neg``
        shared_neg: Optional (M, d) negatives added to every row's denominator

    Returns:
        Scalar loss Tensor
    """
    if query.shape != keys.shape:
        raise ShapeError("info_nce", query.shape, keys.shape)
    extra = negative_logits(query, extra_neg, extra_mask, shared_neg, scale)
    return nce_from_logits(similarity(query, keys, scale), extra)


def symmetric_info_nce(
    query: Tensor,
    keys: Tensor,
    scale: Scale = 1.0,
    extra_neg: Optional[Tensor] = None,
    extra_mask: Optional[np.ndarray] = None,
    shared_neg: Optional[Tensor] = None,
    both_directions: bool = False,
) -> Tensor:
    """visual->text plus text->visual; negatives join the reverse rows only with ``both_directions``"""
    if query.shape != keys.shape:
        raise ShapeError("symmetric_info_nce", query.shape, keys.shape)
    logits = similarity(query, keys, scale)
    extra = negative_logits(query, extra_neg, extra_mask, shared_neg, scale)
    forward = nce_from_logits(logits, extra)
    reverse = nce_from_logits(swapaxes(logits, 0, 1), extra if both_directions else None)
    return forward + reverse


@dataclass
class LossBatchInputs:
    """
    Embeddings of one batch.

    frame_embs is (B, P, T, d) pre-contextualizer frame embeddings; text rows are unit norm.
    hn_text/hn_mask hold H hard negatives per event, padded where an event has fewer.
    """

    frame_embs: Tensor
    event_text: Tensor
    video_text: Tensor
    scale: Scale = 1.0
    vc_out: Optional[VcOutput] = None
    hn_text: Optional[Tensor] = None
    hn_mask: Optional[np.ndarray] = None
    act_text: Optional[Tensor] = None

    @property
    def groups(self) -> int:
        return self.frame_embs.shape[0]

    @property
    def events(self) -> int:
        return self.frame_embs.shape[1]

    @property
    def dim(self) -> int:
        return self.frame_embs.shape[-1]


@dataclass
class LossWeights:
    lambda_video: float = 0.25
    ce: bool = True
    cv: bool = True
    vce: bool = True
    vcv: bool = True
    use_hn: bool = True
    use_extra_negatives: bool = False
    act_p: bool = False
    hn_both_directions: bool = False

    def __post_init__(self):
        if self.lambda_video < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lambda_video}")

    def enabled(self, term: str) -> bool:
        return self.act_p if term == "actp" else getattr(self, term)

    def weight(self, term: str) -> float:
        return self.lambda_video if term in ("cv", "vcv") else 1.0


def video_text_from_events(event_text: Tensor) -> Tensor:
    """Mean of the (already normalised) event texts of each video, re-normalised"""
    return l2_normalize(mean(event_text, axis=-2), axis=-1)


def _flat(x: Tensor) -> Tensor:
    return reshape(x, (-1, x.shape[-1]))


def _event_visuals(inputs: LossBatchInputs) -> Tensor:
    return _flat(l2_normalize(mean(inputs.frame_embs, axis=2), axis=-1))


def _negatives(inputs: LossBatchInputs, weights: LossWeights):
    if not weights.use_hn or inputs.hn_text is None or inputs.hn_text.shape[2] == 0:
        return None, None, None
    n = inputs.groups * inputs.events
    h = inputs.hn_text.shape[2]
    private = reshape(inputs.hn_text, (n, h, inputs.dim))
    mask = (
        np.ones((n, h), dtype=bool)
        if inputs.hn_mask is None
        else np.asarray(inputs.hn_mask, dtype=bool).reshape(n, h)
    )
    if weights.use_extra_negatives:
        rows = np.flatnonzero(mask.reshape(-1))
        return None, None, index(reshape(private, (n * h, inputs.dim)), rows)
    return private, mask, None


def _event_term(query: Tensor, inputs: LossBatchInputs, weights: LossWeights) -> Tensor:
    extra_neg, extra_mask, shared = _negatives(inputs, weights)
    return symmetric_info_nce(
        query,
        _flat(inputs.event_text),
        inputs.scale,
        extra_neg=extra_neg,
        extra_mask=extra_mask,
        shared_neg=shared,
        both_directions=weights.hn_both_directions,
    )


def clip_event_loss(inputs: LossBatchInputs, weights: LossWeights = LossWeights()) -> Tensor:
    """Mean-pooled frames of every event against its prompt, all B*P events in one denominator"""
    return _event_term(_event_visuals(inputs), inputs, weights)


def clip_video_loss(inputs: LossBatchInputs, weights: LossWeights = LossWeights()) -> Tensor:
    visual = l2_normalize(mean(mean(inputs.frame_embs, axis=2), axis=1), axis=-1)
    return symmetric_info_nce(visual, inputs.video_text, inputs.scale)


def _require_vc(inputs: LossBatchInputs, term: str) -> VcOutput:
    if inputs.vc_out is None:
        raise ValidationError(f"loss term '{term}' needs contextualizer outputs")
    return inputs.vc_out


def vc_event_loss(inputs: LossBatchInputs, weights: LossWeights = LossWeights()) -> Tensor:
    return _event_term(_flat(_require_vc(inputs, "vce").e_hat), inputs, weights)


def vc_video_loss(inputs: LossBatchInputs, weights: LossWeights = LossWeights()) -> Tensor:
    return symmetric_info_nce(_require_vc(inputs, "vcv").v_hat, inputs.video_text, inputs.scale)


def action_prompt_loss(inputs: LossBatchInputs, weights: LossWeights = LossWeights()) -> Tensor:
    """Mean-pooled event visuals against action-only prompts"""
    if inputs.act_text is None:
        raise ValidationError("loss term 'actp' needs action-only prompt embeddings")
    return symmetric_info_nce(_event_visuals(inputs), _flat(inputs.act_text), inputs.scale)


TERM_FUNCTIONS = {
    "ce": clip_event_loss,
    "cv": clip_video_loss,
    "vce": vc_event_loss,
    "vcv": vc_video_loss,
    "actp": action_prompt_loss,
}


def total_loss(inputs: LossBatchInputs, weights: LossWeights = LossWeights()) -> tuple[Tensor, dict]:
    """
    Weighted sum of the enabled terms, evaluated in a fixed order.

    Returns:
        Tuple of (scalar loss, report) where the report maps every term to its
        weighted contribution (0.0 when disabled) plus "total"
    """
    total: Optional[Tensor] = None
    report = {}
    for term in TERMS:
        if not weights.enabled(term):
            report[term] = 0.0
            continue
        value = TERM_FUNCTIONS[term](inputs, weights) * weights.weight(term)
        report[term] = value.item()
        total = value if total is None else total + value
    if total is None:
        raise ValidationError("no loss term is enabled")
    report["total"] = total.item()
    return total, report
