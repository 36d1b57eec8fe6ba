"""Retrieval, zero-shot classification and two-caption compositional metrics."""

import logging
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.metrics.pairwise import cosine_similarity
from sklearn.preprocessing import normalize

from src.core.errors import FormatError, ShapeError
from src.storage.embeddings import EmbeddingMatrix

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 5, 10)
DIRECTIONS = ("t2v", "v2t")
CASE_COLUMNS = ("case_id", "visual_id", "positive", "negatives")


def ranks_of(sim: np.ndarray, ground_truth: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    1-based rank of every query's true match.

    Gallery items with strictly greater similarity rank ahead; items tied with
    the true match rank ahead only when their gallery index is lower.
    """
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] == 0:
        raise ShapeError("retrieval_metrics", sim.shape)
    queries, gallery = sim.shape
    if ground_truth is None:
        if queries != gallery:
            raise ShapeError("retrieval_metrics (square similarity needs no index map)", sim.shape)
        ground_truth = np.arange(queries)
    ground_truth = np.asarray(ground_truth, dtype=np.int64)
    if ground_truth.shape != (queries,) or ground_truth.min() < 0 or ground_truth.max() >= gallery:
        raise ShapeError("retrieval_metrics ground truth", sim.shape, ground_truth.shape)

    true_scores = sim[np.arange(queries), ground_truth][:, None]
    greater = (sim > true_scores).sum(axis=1)
    earlier = np.arange(gallery)[None, :] < ground_truth[:, None]
    tied = ((sim == true_scores) & earlier).sum(axis=1)
    return 1 + greater + tied


def retrieval_metrics(
    sim: np.ndarray,
    ks: Sequence[int] = DEFAULT_KS,
    ground_truth: Optional[Sequence[int]] = None,
) -> dict:
    """
    Recall@k (percent), mean rank and lower-median rank.

    Args:
        sim: (Q, G) similarity of query i to gallery item j
        ks: Cut-offs for recall
        ground_truth: Gallery index of each query's match; defaults to the diagonal

    Returns:
        Dictionary with "R@k" for every k, "mean_rank" and "median_rank"
    """
    ranks = ranks_of(sim, ground_truth)
    metrics = {f"R@{k}": float(100.0 * np.mean(ranks <= k)) for k in ks}
    metrics["mean_rank"] = float(np.mean(ranks))
    metrics["median_rank"] = float(np.sort(ranks)[(len(ranks) - 1) // 2])
    return metrics


def pool_frame_embeddings(frames: EmbeddingMatrix) -> EmbeddingMatrix:
    """Average ``<video_id>:<frame_index>`` rows per video and l2-normalise"""
    video_ids = [identifier.rsplit(":", 1)[0] for identifier in frames.ids]
    table = pd.DataFrame(frames.data.astype(np.float64))
    pooled = table.groupby(pd.Series(video_ids, name="video_id"), sort=False).mean()
    return EmbeddingMatrix(normalize(pooled.to_numpy()).astype(np.float32), list(pooled.index))


def video_retrieval(
    videos: EmbeddingMatrix,
    queries: EmbeddingMatrix,
    direction: str = "t2v",
    ks: Sequence[int] = DEFAULT_KS,
) -> dict:
    """
    Text-to-video (or video-to-text) retrieval; the true match shares the query's id.

    Args:
        videos: One row per video, ids are video ids
        queries: One text embedding per video, ids are video ids
        direction: "t2v" ranks videos per text, "v2t" ranks texts per video
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"Unknown direction '{direction}', expected one of {DIRECTIONS}")
    if direction == "t2v":
        query, gallery = queries, videos
    else:
        query, gallery = videos, queries
    ground_truth = [gallery.row_of(identifier) for identifier in query.ids]
    sim = cosine_similarity(query.data.astype(np.float64), gallery.data.astype(np.float64))
    metrics = retrieval_metrics(sim, ks, ground_truth)
    logger.info(f"{direction} retrieval over {query.rows} queries: {metrics}")
    return metrics


def zero_shot_classify(
    embeddings: np.ndarray,
    labels: Sequence[str],
    classes: EmbeddingMatrix,
    ks: Sequence[int] = (1, 5),
) -> dict:
    """
    Top-k accuracy (percent) of predicting each row's class by cosine similarity.

    Args:
        embeddings: (N, d) visual embeddings
        labels: True class name of each row
        classes: One prompt embedding per class, ids are class names
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or len(labels) != embeddings.shape[0]:
        raise ShapeError("zero_shot_classify", embeddings.shape, (len(labels),))
    truth = np.array([classes.row_of(label) for label in labels], dtype=np.int64)
    sim = cosine_similarity(embeddings, classes.data.astype(np.float64))
    order = np.argsort(-sim, axis=1, kind="stable")
    hits = order == truth[:, None]
    return {f"top{k}": float(100.0 * hits[:, : min(k, classes.rows)].any(axis=1).mean()) for k in ks}


def caption_choice(visual: np.ndarray, positive: np.ndarray, negatives: np.ndarray) -> bool:
    """True iff the positive caption is strictly closer to ``visual`` than every negative"""
    negatives = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if negatives.shape[0] == 0 or negatives.size == 0:
        raise FormatError("caption choice needs at least one negative")
    visual = np.asarray(visual, dtype=np.float64).reshape(1, -1)
    positive_score = cosine_similarity(visual, np.asarray(positive, dtype=np.float64).reshape(1, -1))[0, 0]
    return bool(positive_score > cosine_similarity(visual, negatives).max())


def load_compose_cases(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.read_text(encoding="utf-8").strip():
        return pd.DataFrame(columns=list(CASE_COLUMNS))
    try:
        cases = pd.read_json(path, lines=True, dtype=False)
    except ValueError as e:
        raise FormatError(f"{path}: invalid case file ({e})") from None
    missing = [c for c in CASE_COLUMNS if c not in cases.columns]
    if missing:
        raise FormatError(f"{path}: cases lack columns {missing}")
    return cases


def compose_accuracy(
    cases: pd.DataFrame,
    visuals: EmbeddingMatrix,
    embed_texts: Callable[[list[str]], np.ndarray],
) -> dict:
    """
    Two-caption accuracy over a case table.

    Args:
        cases: Rows with case_id, visual_id, positive and a list of negatives
        visuals: Visual embeddings addressed by visual_id
        embed_texts: Maps a list of strings to an (N, d) array
    """
    correct = []
    for case in cases.itertuples(index=False):
        negatives = case.negatives if isinstance(case.negatives, list) else []
        if not negatives:
            raise FormatError(f"case {case.case_id}: empty negative list")
        texts = embed_texts([case.positive, *negatives])
        correct.append(caption_choice(visuals.vector(case.visual_id), texts[0], texts[1:]))
    accuracy = float(100.0 * np.mean(correct)) if correct else 0.0
    return {"accuracy": accuracy, "cases": len(correct), "correct": int(np.sum(correct))}
