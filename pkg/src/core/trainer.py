"""
Post-pretraining loop: batch construction, frame subsampling, hard negatives,
AdamW steps on the trainable parameters and per-epoch checkpoints.
"""

import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.core.annotations import Dataset, EventAnnotation, build_verb_lexicon
from src.core.config import TrainConfig
from src.core.encoders import FrameStore
from src.core.errors import EmptyDataset, TrainingDiverged
from src.core.losses import TERMS, LossBatchInputs, total_loss, video_text_from_events
from src.core.model import FigClipModel
from src.core.negatives import batch_noun_pool, batch_verb_pool, hard_negatives_for_event
from src.core.optim import AdamW
from src.core.prompting import PromptRecord, render_action_prompt, render_event_prompt
from src.core.tensor import Tensor, concat, get_default_dtype, index, precision, reshape
from src.storage.checkpoint import decode_counter, encode_counter, load_checkpoint, save_checkpoint
from src.utils.frames import subsample_indices
from src.utils.seeding import derive_rng, derive_seed

logger = logging.getLogger(__name__)

LOG_NAME = "trainlog.jsonl"


@dataclass
class Batch:
    """``groups`` holds B videos of P events, or B*P single events when videos are split apart"""

    groups: list[list[EventAnnotation]]
    video_ids: list[str]
    uses_vc: bool = True

    @property
    def events(self) -> list[EventAnnotation]:
        return [event for group in self.groups for event in group]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.groups), len(self.groups[0])


def _chunk(items: list, size: int) -> list[list]:
    return [items[i:i + size] for i in range(0, len(items) - size + 1, size)]


def make_batches(
    dataset: Dataset,
    strategy: str,
    batch_videos: int,
    seed: int,
    epoch: int = 0,
) -> list[Batch]:
    """
    Split a dataset into full batches for one epoch; the last partial batch is dropped.

    Args:
        dataset: Videos to batch
        strategy: "default" (shuffled videos), "shuffle_events" (events pooled
            across videos) or "same_movie" (videos grouped by movie)
        batch_videos: B, videos per batch
        seed: Run seed
        epoch: Epoch index, mixed into the shuffle seed

    Returns:
        List of Batch, each with B*P events
    """
    videos = list(dataset.videos)
    if not videos:
        raise EmptyDataset(f"dataset split '{dataset.split}' has no videos")
    rng = derive_rng(seed, epoch, 0)

    if strategy == "default":
        order = [videos[i] for i in rng.permutation(len(videos))]
        batches = [
            Batch([list(v.events) for v in chunk], [v.video_id for v in chunk]) for chunk in _chunk(order, batch_videos)
        ]
    elif strategy == "same_movie":
        movies: dict[str, list] = {}
        for video in videos:
            movies.setdefault(video.movie_id, []).append(video)
        names = sorted(movies)
        order = []
        for i in rng.permutation(len(names)):
            members = movies[names[i]]
            order.extend(members[j] for j in rng.permutation(len(members)))
        batches = [
            Batch([list(v.events) for v in chunk], [v.video_id for v in chunk]) for chunk in _chunk(order, batch_videos)
        ]
    elif strategy == "shuffle_events":
        pooled = [(video.video_id, event) for video in videos for event in video.events]
        order = [pooled[i] for i in rng.permutation(len(pooled))]
        batches = [
            Batch([[event] for _, event in chunk], [video_id for video_id, _ in chunk], uses_vc=False)
            for chunk in _chunk(order, batch_videos * dataset.events_per_video)
        ]
    else:
        raise ValueError(f"Unknown batch strategy '{strategy}'")

    if not batches:
        raise EmptyDataset(f"{len(videos)} videos cannot fill one batch of {batch_videos}")
    return batches


def subsample_frames(event: EventAnnotation, frames: int, mode: str = "uniform", seed=None) -> list[str]:
    """Pick ``frames`` frame refs of ``event``, one per equal-width bin"""
    rng = np.random.default_rng(seed) if mode == "jitter" else None
    return [event.frame_refs[i] for i in subsample_indices(len(event.frame_refs), frames, mode, rng)]


@dataclass
class TrainResult:
    checkpoints: list[Path]
    log_path: Path
    summary: pd.DataFrame
    steps: int = 0
    history: list[dict] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return float(self.summary["total"].iloc[-1]) if len(self.summary) else float("nan")


class Trainer:
    """Runs the training loop for one dataset and config"""

    def __init__(
        self,
        dataset: Dataset,
        config: TrainConfig,
        store: FrameStore,
        out_dir: Union[str, Path],
    ):
        config.validate()
        self.dataset = dataset
        self.config = config
        self.store = store
        self.out_dir = Path(out_dir)
        self.weights = config.loss_weights()
        self.lexicon = build_verb_lexicon(dataset)
        with precision(config.precision):
            self.model = FigClipModel(config)
            self.optimizer = AdamW(
                self.model.trainable_parameters(),
                lr=config.lr,
                betas=(config.beta1, config.beta2),
                eps=config.eps,
                weight_decay=config.weight_decay,
            )
        logger.info(
            f"Adapting the backbone by {config.adaptation}, text encoder by {config.text_mode() or 'nothing'}: "
            f"{self.model.trainable_parameter_count} trainable values"
        )
        self._static_negatives: Optional[dict[str, list[PromptRecord]]] = None

    @property
    def hn_count(self) -> int:
        return self.config.nvr + self.config.nrn

    # -- per-batch inputs ------------------------------------------------------

    def _frame_grid(self, batch: Batch, epoch: int, batch_index: int) -> np.ndarray:
        config = self.config
        grids = []
        for g, group in enumerate(batch.groups):
            per_event = []
            for p, event in enumerate(group):
                seed = derive_seed(config.seed, epoch, batch_index, g, p)
                per_event.append(self.store.grid(subsample_frames(event, config.frames_per_event, config.frame_mode, seed)))
            grids.append(np.stack(per_event))
        return np.stack(grids)

    def _prompts(self, events: Sequence[EventAnnotation]) -> list[str]:
        return [render_event_prompt(e, self.config.prompt_style).text for e in events]

    def _build_static_negatives(self) -> dict[str, list[PromptRecord]]:
        events = list(self.dataset.events())
        verbs = batch_verb_pool(events, self.lexicon)
        nouns = batch_noun_pool(events)
        return {
            event.event_id: hard_negatives_for_event(
                event, verbs, nouns, self.config.nvr, self.config.nrn, self.config.swap_fraction,
                derive_seed(self.config.seed, 0, i),
            )
            for i, event in enumerate(events)
        }

    def negatives_for(self, batch: Batch, epoch: int, batch_index: int) -> list[list[PromptRecord]]:
        """Hard negatives for every event of ``batch``, in batch order"""
        config = self.config
        if config.hn_static:
            if self._static_negatives is None:
                self._static_negatives = self._build_static_negatives()
            return [self._static_negatives[e.event_id] for e in batch.events]
        events = batch.events
        verbs = batch_verb_pool(events, self.lexicon)
        nouns = batch_noun_pool(events)
        groups, per_group = batch.shape
        return [
            hard_negatives_for_event(
                event, verbs, nouns, config.nvr, config.nrn, config.swap_fraction,
                derive_seed(config.seed, epoch, batch_index, i // per_group, i % per_group, 1),
            )
            for i, event in enumerate(events)
        ]

    def _negative_inputs(self, batch: Batch, epoch: int, batch_index: int) -> tuple[Tensor, np.ndarray]:
        """Padded (G, P, H, d) negative embeddings and their (G, P, H) validity mask"""
        groups, per_group = batch.shape
        h, dim = self.hn_count, self.config.dim
        mask = np.zeros((groups * per_group, h), dtype=bool)
        # row 0 of the lookup table is the zero padding vector
        lookup = np.zeros(groups * per_group * h, dtype=np.int64)
        texts = []
        for i, records in enumerate(self.negatives_for(batch, epoch, batch_index)):
            for j, record in enumerate(records[:h]):
                mask[i, j] = True
                texts.append(record.text)
                lookup[i * h + j] = len(texts)
        rows = Tensor(np.zeros((1, dim), dtype=get_default_dtype()))
        if texts:
            rows = concat([rows, self.model.text.embed_texts(texts)], axis=0)
        hn_text = reshape(index(rows, lookup), (groups, per_group, h, dim))
        return hn_text, mask.reshape(groups, per_group, h)

    def batch_inputs(self, batch: Batch, epoch: int, batch_index: int) -> LossBatchInputs:
        model, config = self.model, self.config
        groups, per_group = batch.shape
        frame_embs = model.encode_frames(self._frame_grid(batch, epoch, batch_index))
        event_text = reshape(model.text.embed_texts(self._prompts(batch.events)), (groups, per_group, config.dim))
        inputs = LossBatchInputs(
            frame_embs=frame_embs,
            event_text=event_text,
            video_text=video_text_from_events(event_text),
            scale=model.scale(),
        )
        if batch.uses_vc and (self.weights.vce or self.weights.vcv):
            inputs.vc_out = model.vc(frame_embs)
        if self.weights.use_hn and self.hn_count:
            inputs.hn_text, inputs.hn_mask = self._negative_inputs(batch, epoch, batch_index)
        if self.weights.act_p:
            actions = [render_action_prompt(e).text for e in batch.events]
            inputs.act_text = reshape(model.text.embed_texts(actions), (groups, per_group, config.dim))
        return inputs

    # -- loop ------------------------------------------------------------------

    def checkpoint(self, epoch: int) -> Path:
        tensors = dict(self.model.state_dict())
        tensors.update(self.optimizer.state_dict())
        tensors["meta.epoch"] = encode_counter(epoch)
        return save_checkpoint(self.out_dir / f"ckpt_epoch{epoch}.fgckpt", tensors)

    def resume(self, path: Union[str, Path]) -> int:
        """Restore model and optimizer state; returns the epoch the checkpoint was written after"""
        state = load_checkpoint(path)
        with precision(self.config.precision):
            self.model.load_state_dict(state)
            self.optimizer.load_state_dict(state)
        epoch = decode_counter(state["meta.epoch"]) if "meta.epoch" in state else 0
        logger.info(f"Resuming from {path} after epoch {epoch} (step {self.optimizer.step_index})")
        return epoch

    def train_step(self, batch: Batch, epoch: int, batch_index: int) -> dict:
        inputs = self.batch_inputs(batch, epoch, batch_index)
        loss, report = total_loss(inputs, self.weights)
        step = self.optimizer.step_index + 1
        if not np.isfinite(report["total"]):
            raise TrainingDiverged(step, f"non-finite loss {report['total']} at step {step} (epoch {epoch})")
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return {"step": step, "epoch": epoch, **{term: report[term] for term in TERMS}, "total": report["total"]}

    def run(self, resume_from: Optional[Union[str, Path]] = None) -> TrainResult:
        """
        Train for ``config.epochs`` epochs.

        Writes ``ckpt_epoch0.fgckpt`` (initial state, fresh runs only), one
        ``ckpt_epoch<N>.fgckpt`` per epoch and ``trainlog.jsonl`` into ``out_dir``.
        """
        config = self.config
        self.out_dir.mkdir(parents=True, exist_ok=True)
        log_path = self.out_dir / LOG_NAME
        checkpoints = []
        start = 1
        if resume_from is not None:
            start = self.resume(resume_from) + 1
        else:
            log_path.write_text("", encoding="utf-8")
            checkpoints.append(self.checkpoint(0))

        history = []
        with precision(config.precision), log_path.open("a", encoding="utf-8") as log:
            for epoch in range(start, config.epochs + 1):
                batches = make_batches(self.dataset, config.batch_strategy, config.batch_videos, config.seed, epoch)
                progress = tqdm(
                    batches, desc=f"epoch {epoch}", file=sys.stderr, disable=not config.progress, leave=False
                )
                for batch_index, batch in enumerate(progress):
                    record = self.train_step(batch, epoch, batch_index)
                    log.write(json.dumps(record) + "\n")
                    history.append(record)
                    progress.set_postfix(loss=f"{record['total']:.4f}")
                log.flush()
                checkpoints.append(self.checkpoint(epoch))
                epoch_rows = [r for r in history if r["epoch"] == epoch]
                logger.info(
                    f"Epoch {epoch}/{config.epochs}: mean loss "
                    f"{np.mean([r['total'] for r in epoch_rows]):.4f} over {len(epoch_rows)} steps"
                )

        summary = summarize_log(history)
        return TrainResult(
            checkpoints=checkpoints,
            log_path=log_path,
            summary=summary,
            steps=self.optimizer.step_index,
            history=history,
        )


def summarize_log(records: Sequence[dict]) -> pd.DataFrame:
    """Per-epoch mean of every loss column"""
    columns = ["epoch", *TERMS, "total"]
    if not records:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame.from_records(records)
    return frame[columns].groupby("epoch", as_index=False).mean()


def train(
    dataset: Dataset,
    config: TrainConfig,
    store: FrameStore,
    out_dir: Union[str, Path],
    resume_from: Optional[Union[str, Path]] = None,
) -> TrainResult:
    trainer = Trainer(dataset, config, store, out_dir)
    return trainer.run(resume_from=resume_from)
