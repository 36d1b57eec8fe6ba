import logging
import math
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from src.core.annotations import Dataset, VideoAnnotation
from src.core.config import TrainConfig
from src.core.contextualizer import VideoContextualizer
from src.core.encoders import FrameStore, FrozenBackbone, TextEmbedder
from src.core.errors import FormatError, ShapeError
from src.core.lora import count_parameters, inject
from src.core.prompting import render_event_prompt
from src.core.tensor import Parameter, Tensor, clamp, exp, get_default_dtype, l2_normalize, no_grad
from src.storage.checkpoint import load_checkpoint
from src.storage.embeddings import EmbeddingMatrix
from src.utils.frames import subsample_indices
from src.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

INIT_TEMPERATURE = 0.07
MAX_LOGIT_SCALE = 100.0
POOLINGS = ("mean", "vc")


class FigClipModel:
    """
    Backbone and text embedder adapted by LoRA, partial or full fine-tuning,
    plus a trainable contextualizer and logit scale.

    Build it inside ``precision(config.precision)`` so every parameter gets that dtype.
    """

    def __init__(self, config: TrainConfig):
        self.config = config
        self.backbone = FrozenBackbone(config.backbone_spec())
        self.text = TextEmbedder(
            dim=config.dim,
            seed=config.encoder_seed,
            normalize=config.normalize,
            encoder_depth=config.text_depth if config.text_mode() else 0,
            heads=config.heads,
            mlp_ratio=config.mlp_ratio,
            threads=config.threads,
        )
        self.adapters = self._adapt(self.backbone, config.adaptation, config.lora_targets, derive_seed(config.seed, 1))
        self.text_adapters = []
        if config.text_mode():
            self.text_adapters = self._adapt(
                self.text, config.text_mode(), config.text_lora_targets, derive_seed(config.seed, 2)
            )
        self.vc = VideoContextualizer(
            dim=config.dim,
            depth=config.vc_depth,
            heads=config.heads,
            mlp_ratio=config.mlp_ratio,
            max_events=config.max_events,
            max_frames=config.max_frames,
            seed=derive_seed(config.seed, 3),
        )
        self.logit_tau = Parameter(
            "logit_scale",
            np.array(math.log(1.0 / INIT_TEMPERATURE), dtype=get_default_dtype()),
            frozen=config.fixed_scale is not None,
        )

    def _adapt(self, encoder, mode: str, targets: tuple, seed) -> list:
        if mode == "full":
            encoder.unfreeze()
            return []
        if mode == "partial":
            encoder.unfreeze_from(self.config.frozen_blocks)
            return []
        if self.config.lora_rank and targets:
            return inject(encoder, targets, self.config.lora_rank, seed)
        return []

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], config: TrainConfig) -> "FigClipModel":
        model = cls(config)
        model.load_state_dict(load_checkpoint(path))
        logger.info(f"Loaded model weights from {path}")
        return model

    def scale(self) -> Union[Tensor, float]:
        if self.config.fixed_scale is not None:
            return float(self.config.fixed_scale)
        return clamp(exp(self.logit_tau), high=MAX_LOGIT_SCALE)

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        yield from self.backbone.named_parameters()
        yield from self.text.named_parameters()
        for adapter in self.adapters + self.text_adapters:
            for p in adapter.parameters():
                yield p.name, p
        yield from self.vc.named_parameters()
        yield self.logit_tau.name, self.logit_tau

    def trainable_parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters() if not p.frozen]

    def frozen_parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters() if p.frozen]

    @property
    def lora_parameter_count(self) -> int:
        return count_parameters(self.adapters + self.text_adapters)

    @property
    def trainable_parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.trainable_parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        """Copy stored values into every parameter; keys outside the model are ignored"""
        for name, p in self.named_parameters():
            if name not in state:
                raise FormatError(f"Checkpoint has no tensor '{name}'")
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise FormatError(f"Tensor '{name}' has shape {value.shape}, expected {p.shape}")
            p.data = value.astype(p.dtype)

    # -- embedding extraction ------------------------------------------------

    def encode_frames(self, grid) -> Tensor:
        """(..., tokens, feature_dim) -> (..., dim)"""
        return self.backbone(grid)

    def video_grid(self, video: VideoAnnotation, store: FrameStore, frames: int) -> np.ndarray:
        """(P, T, tokens, feature_dim) uniformly subsampled frames of ``video``"""
        per_event = []
        for event in video.events:
            picks = subsample_indices(len(event.frame_refs), frames, "uniform")
            per_event.append(store.grid([event.frame_refs[i] for i in picks]))
        return np.stack(per_event)

    def event_embeddings(self, dataset: Dataset, store: FrameStore, frames: Optional[int] = None) -> EmbeddingMatrix:
        """Mean-pooled frame embeddings per event, ids are event ids"""
        frames = frames or self.config.frames_per_event
        rows, ids = [], []
        with no_grad():
            for video in dataset.videos:
                embs = self.encode_frames(self.video_grid(video, store, frames)).data
                pooled = l2_normalize(Tensor(embs.mean(axis=1)), axis=-1).data
                rows.extend(pooled)
                ids.extend(e.event_id for e in video.events)
        return EmbeddingMatrix.from_rows(rows, ids, self.config.dim)

    def video_embeddings(
        self,
        dataset: Dataset,
        store: FrameStore,
        pooling: str = "mean",
        frames: Optional[int] = None,
    ) -> EmbeddingMatrix:
        """One row per video: normalised mean of its frame embeddings, or the contextualizer's video token"""
        if pooling not in POOLINGS:
            raise ValueError(f"Unknown pooling '{pooling}', expected one of {POOLINGS}")
        frames = frames or self.config.frames_per_event
        rows, ids = [], []
        with no_grad():
            for video in dataset.videos:
                embs = self.encode_frames(self.video_grid(video, store, frames))
                if pooling == "vc":
                    if len(video.events) > self.config.max_events:
                        raise ShapeError("vc pooling", embs.shape, (self.config.max_events, frames))
                    rows.append(self.vc(embs).v_hat.data)
                else:
                    flat = embs.data.reshape(-1, embs.shape[-1])
                    rows.append(l2_normalize(Tensor(flat.mean(axis=0)), axis=-1).data)
                ids.append(video.video_id)
        return EmbeddingMatrix.from_rows(rows, ids, self.config.dim)

    def frame_embeddings(self, dataset: Dataset, store: FrameStore, frames: Optional[int] = None) -> EmbeddingMatrix:
        """Every subsampled frame embedding, ids ``<video_id>:<frame_index>``"""
        frames = frames or self.config.frames_per_event
        rows, ids = [], []
        with no_grad():
            for video in dataset.videos:
                embs = self.encode_frames(self.video_grid(video, store, frames)).data
                flat = embs.reshape(-1, embs.shape[-1])
                rows.extend(flat)
                ids.extend(f"{video.video_id}:{i}" for i in range(len(flat)))
        return EmbeddingMatrix.from_rows(rows, ids, self.config.dim)

    def text_embeddings(self, texts: Sequence[str], ids: Optional[Sequence[str]] = None) -> EmbeddingMatrix:
        with no_grad():
            data = self.text.embed_texts(list(texts)).data
        return EmbeddingMatrix.from_rows(list(data), list(ids if ids is not None else texts), self.config.dim)

    def event_prompt_embeddings(self, dataset: Dataset) -> EmbeddingMatrix:
        """Positive prompt embedding per event, ids are event ids"""
        events = list(dataset.events())
        texts = [render_event_prompt(e, self.config.prompt_style).text for e in events]
        return self.text_embeddings(texts, [e.event_id for e in events])

    def video_prompt_embeddings(self, dataset: Dataset) -> EmbeddingMatrix:
        """Normalised mean of each video's event prompt embeddings, ids are video ids"""
        events = self.event_prompt_embeddings(dataset)
        rows = []
        for video in dataset.videos:
            stacked = np.stack([events.vector(e.event_id) for e in video.events]).astype(np.float64)
            rows.append(l2_normalize(Tensor(stacked.mean(axis=0)), axis=-1).data)
        return EmbeddingMatrix.from_rows(rows, [v.video_id for v in dataset.videos], self.config.dim)
