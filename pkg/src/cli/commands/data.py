import argparse
import logging
from pathlib import Path

from src.cli.commands.common import add_config_arguments, emit, load_config
from src.services.annotation_service import AnnotationService
from src.services.planted_data_service import PlantedDataService, PlantedSpec
from src.storage.embeddings import save_embeddings
from src.utils.jsonl import write_jsonl

logger = logging.getLogger(__name__)

FEATURES_NAME = "features.fgemb"


def synth_data(args: argparse.Namespace) -> int:
    """
    Write a planted dataset: train/held-out annotations, their frame features
    and a compositional case file, shaped after the resolved train config.
    """
    config = load_config(args)
    spec = PlantedSpec(
        videos=args.videos,
        heldout_videos=args.heldout_videos,
        events_per_video=args.events_per_video,
        frames_per_event=args.frames_per_event,
        verbs=args.verbs,
        nouns_per_role=args.nouns_per_role,
        movies=args.movies,
        noise=args.noise,
        tokens=config.tokens,
        feature_dim=config.feature_dim,
        dim=config.dim,
        encoder_seed=config.encoder_seed,
    )
    data = PlantedDataService.generate(spec, config.seed)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    written = {
        "train": str(AnnotationService.save_dataset(out / "train.json", data.train)),
        "features": str(save_embeddings(out / FEATURES_NAME, data.features)),
    }
    compose_source = data.train
    if data.heldout is not None:
        written["heldout"] = str(AnnotationService.save_dataset(out / "heldout.json", data.heldout))
        compose_source = data.heldout
    cases = PlantedDataService.compose_cases(compose_source, args.compose_negatives, config.seed)
    write_jsonl(out / "compose.jsonl", cases)
    written["compose"] = str(out / "compose.jsonl")

    emit({"files": written, "videos": spec.videos, "heldout_videos": spec.heldout_videos, "cases": len(cases)})
    return 0


def register(subparsers) -> None:
    defaults = PlantedSpec()
    parser = subparsers.add_parser("synth-data", help="generate planted videos with a known text alignment")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--videos", type=int, default=defaults.videos)
    parser.add_argument("--heldout-videos", type=int, default=defaults.heldout_videos)
    parser.add_argument("--events-per-video", type=int, default=defaults.events_per_video)
    parser.add_argument("--frames-per-event", type=int, default=defaults.frames_per_event)
    parser.add_argument("--verbs", type=int, default=defaults.verbs)
    parser.add_argument("--nouns-per-role", type=int, default=defaults.nouns_per_role)
    parser.add_argument("--movies", type=int, default=defaults.movies)
    parser.add_argument("--noise", type=float, default=defaults.noise)
    parser.add_argument("--compose-negatives", type=int, default=4, help="negatives per compositional case")
    add_config_arguments(parser)
    parser.set_defaults(handler=synth_data)
