import argparse
import logging
from pathlib import Path

from src.cli.commands.common import emit, env_int
from src.core.annotations import build_verb_lexicon
from src.core.config import PROMPT_STYLES
from src.core.errors import ValidationError
from src.core.negatives import batch_noun_pool, batch_verb_pool, hard_negatives_for_event
from src.core.prompting import render_action_prompt, render_event_prompt
from src.services.annotation_service import AnnotationService
from src.utils.jsonl import write_jsonl
from src.utils.seeding import derive_seed

logger = logging.getLogger(__name__)


def gen_prompts(args: argparse.Namespace) -> int:
    """One positive PromptRecord per event, plus its action-only prompt with --action-only"""
    dataset = AnnotationService.load_dataset(args.annotations)
    records = []
    for event in dataset.events():
        records.append(render_event_prompt(event, args.style).to_dict())
        if args.action_only:
            records.append(render_action_prompt(event).to_dict())
    count = write_jsonl(args.out, records)
    logger.info(f"Wrote {count} prompts to {args.out}")
    emit({"prompts": count, "out": str(args.out)})
    return 0


def gen_negatives(args: argparse.Namespace) -> int:
    """Hard negatives for every event, drawing verbs and nouns from the whole file"""
    if not 0 < args.swap_fraction < 1:
        raise ValidationError(f"--swap-fraction must be in (0, 1), got {args.swap_fraction}")
    dataset = AnnotationService.load_dataset(args.annotations)
    seed = args.seed if args.seed is not None else env_int("FIGCLIP_SEED") or 0
    events = list(dataset.events())
    verbs = batch_verb_pool(events, build_verb_lexicon(dataset))
    nouns = batch_noun_pool(events)

    records = []
    for i, event in enumerate(events):
        negatives = hard_negatives_for_event(
            event, verbs, nouns, args.nvr, args.nrn, args.swap_fraction, derive_seed(seed, i)
        )
        records.extend(r.to_dict() for r in negatives)
    count = write_jsonl(args.out, records)
    logger.info(f"Wrote {count} hard negatives for {len(events)} events to {args.out}")
    emit({"negatives": count, "events": len(events), "out": str(args.out)})
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("gen-prompts", help="render positive prompts from annotations")
    parser.add_argument("--annotations", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="JSONL of PromptRecords")
    parser.add_argument("--style", choices=PROMPT_STYLES, default="template")
    parser.add_argument("--action-only", action="store_true", help="also emit action-only prompts")
    parser.set_defaults(handler=gen_prompts)

    parser = subparsers.add_parser("gen-negatives", help="generate verb-role and role-noun hard negatives")
    parser.add_argument("--annotations", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="JSONL of PromptRecords")
    parser.add_argument("--nvr", type=int, default=4, help="verb-role negatives per event")
    parser.add_argument("--nrn", type=int, default=0, help="role-noun negatives per event")
    parser.add_argument("--swap-fraction", type=float, default=0.5)
    parser.add_argument("--seed", type=int)
    parser.set_defaults(handler=gen_negatives)
