"""
Evaluation commands. Each runs either on FGEMB1 embedding files or on a
checkpoint plus annotations, in which case embeddings are computed on the fly.
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from src.cli.commands.common import add_model_arguments, build_model, emit, frame_store, load_config, require
from src.core.evaluation import (
    DIRECTIONS,
    compose_accuracy,
    load_compose_cases,
    pool_frame_embeddings,
    video_retrieval,
    zero_shot_classify,
)
from src.core.errors import FormatError, ValidationError
from src.core.model import POOLINGS
from src.core.prompting import render_class_prompt
from src.core.tensor import precision
from src.services.annotation_service import AnnotationService
from src.storage.embeddings import load_embeddings
from src.utils.jsonl import read_jsonl

logger = logging.getLogger(__name__)

LEVELS = ("video", "event")


def _model_context(args: argparse.Namespace):
    require(args, "annotations")
    config = load_config(args)
    dataset = AnnotationService.load_dataset(args.annotations)
    return config, dataset, frame_store(args, config)


def eval_retrieval(args: argparse.Namespace) -> int:
    if args.frames is not None or args.videos is not None:
        require(args, "queries")
        videos = pool_frame_embeddings(load_embeddings(args.frames)) if args.frames else load_embeddings(args.videos)
        queries = load_embeddings(args.queries)
    else:
        config, dataset, store = _model_context(args)
        with precision(config.precision):
            model = build_model(args, config)
            if args.level == "event":
                videos = model.event_embeddings(dataset, store)
                queries = model.event_prompt_embeddings(dataset)
            else:
                videos = model.video_embeddings(dataset, store, pooling=args.pooling)
                queries = model.video_prompt_embeddings(dataset)
    metrics = video_retrieval(videos, queries, direction=args.direction)
    emit({"direction": args.direction, "level": args.level, "queries": queries.rows, **metrics}, args.out)
    return 0


def eval_classify(args: argparse.Namespace) -> int:
    if args.embeddings is not None:
        require(args, "labels", "classes")
        embeddings = load_embeddings(args.embeddings)
        try:
            labels = {record["id"]: record["label"] for record in read_jsonl(args.labels)}
        except (KeyError, TypeError):
            raise FormatError(f"{args.labels}: every line needs \"id\" and \"label\"") from None
        missing = [i for i in embeddings.ids if i not in labels]
        if missing:
            raise ValidationError(f"{len(missing)} embeddings have no label, e.g. '{missing[0]}'")
        classes = load_embeddings(args.classes)
        data, truth = embeddings.data, [labels[i] for i in embeddings.ids]
    else:
        config, dataset, store = _model_context(args)
        with precision(config.precision):
            model = build_model(args, config)
            visuals = model.event_embeddings(dataset, store)
            names = sorted({e.verb for e in dataset.events()})
            classes = model.text_embeddings([render_class_prompt(n) for n in names], names)
        data, truth = visuals.data, [e.verb for e in dataset.events()]
    report = zero_shot_classify(np.asarray(data), truth, classes)
    emit({"samples": len(truth), "classes": classes.rows, **report}, args.out)
    return 0


def eval_compose(args: argparse.Namespace) -> int:
    cases = load_compose_cases(args.cases)
    if args.visuals is None:
        require(args, "annotations")
    config = load_config(args)
    with precision(config.precision):
        model = build_model(args, config)
        if args.visuals is not None:
            visuals = load_embeddings(args.visuals)
        else:
            dataset = AnnotationService.load_dataset(args.annotations)
            visuals = model.event_embeddings(dataset, frame_store(args, config))
        report = compose_accuracy(cases, visuals, lambda texts: model.text_embeddings(texts).data)
    emit(report, args.out)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval-retrieval", help="text-to-video or video-to-text retrieval")
    parser.add_argument("--frames", type=Path, help="FGEMB1 frame embeddings, ids <video_id>:<frame_index>")
    parser.add_argument("--videos", type=Path, help="FGEMB1 video embeddings, ids are video ids")
    parser.add_argument("--queries", type=Path, help="FGEMB1 text embeddings, ids are video ids")
    parser.add_argument("--direction", choices=DIRECTIONS, default="t2v")
    parser.add_argument("--level", choices=LEVELS, default="video", help="checkpoint mode: videos or events")
    parser.add_argument("--pooling", choices=POOLINGS, default="mean", help="checkpoint mode video pooling")
    parser.add_argument("--out", type=Path)
    add_model_arguments(parser)
    parser.set_defaults(handler=eval_retrieval)

    parser = subparsers.add_parser("eval-classify", help="zero-shot action classification")
    parser.add_argument("--embeddings", type=Path, help="FGEMB1 visual embeddings")
    parser.add_argument("--labels", type=Path, help='JSONL of {"id": ..., "label": ...}')
    parser.add_argument("--classes", type=Path, help="FGEMB1 class prompt embeddings, ids are class names")
    parser.add_argument("--out", type=Path)
    add_model_arguments(parser)
    parser.set_defaults(handler=eval_classify)

    parser = subparsers.add_parser("eval-compose", help="two-caption compositional accuracy")
    parser.add_argument("--cases", type=Path, required=True, help="JSONL of case_id, visual_id, positive, negatives")
    parser.add_argument("--visuals", type=Path, help="FGEMB1 visual embeddings addressed by visual_id")
    parser.add_argument("--out", type=Path)
    add_model_arguments(parser)
    parser.set_defaults(handler=eval_compose)
