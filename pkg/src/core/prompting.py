"""
Rule-based prompts for SRL events.

Grammar (byte-stable, text encoders are cached by prompt bytes):

    In this photo, the action is <verb> where, the <r1> is <n1>, <r2> is <n2>, ..., and <rn> of the event is <nn>.

A single-role event ends after "the <r1> is <n1>." with no "and" clause.
"""

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

from src.core.annotations import EventAnnotation, RolePair
from src.core.errors import TemplateError, ValidationError

logger = logging.getLogger(__name__)

PREFIX = "In this photo, the action is "
WHERE = " where, "


class PromptKind(str, Enum):
    POSITIVE = "positive"
    HN_VERB_ROLE = "hn_verb_role"
    HN_ROLE_NOUN = "hn_role_noun"
    ACTION_ONLY = "action_only"


@dataclass(frozen=True)
class Perturbation:
    slot: str
    old: str
    new: str


@dataclass(frozen=True)
class PromptRecord:
    text: str
    kind: PromptKind
    source_event_id: str
    perturbation_log: tuple[Perturbation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", PromptKind(self.kind))
        object.__setattr__(self, "perturbation_log", tuple(self.perturbation_log))
        if not self.text:
            raise ValidationError(f"prompt for event {self.source_event_id} is empty")
        unperturbed = self.kind in (PromptKind.POSITIVE, PromptKind.ACTION_ONLY)
        if unperturbed == bool(self.perturbation_log):
            raise ValidationError(
                f"{self.kind.value} prompt for event {self.source_event_id} "
                f"{'must not' if unperturbed else 'must'} carry a perturbation log"
            )

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "kind": self.kind.value,
            "source_event_id": self.source_event_id,
            "perturbation_log": [[p.slot, p.old, p.new] for p in self.perturbation_log],
        }


def render_template(verb: str, roles: Sequence[RolePair]) -> str:
    if not roles:
        raise TemplateError(f"cannot render verb '{verb}' without roles")
    first = roles[0]
    if len(roles) == 1:
        return f"{PREFIX}{verb}{WHERE}the {first.role} is {first.noun}."
    middle = "".join(f", {r.role} is {r.noun}" for r in roles[1:-1])
    last = roles[-1]
    return (
        f"{PREFIX}{verb}{WHERE}the {first.role} is {first.noun}{middle}, "
        f"and {last.role} of the event is {last.noun}."
    )


def render_event_prompt(event: EventAnnotation, style: str = "template") -> PromptRecord:
    """Positive prompt for ``event``; ``style="natural"`` uses the event's natural prompt if any"""
    if style == "natural":
        if event.natural_prompt:
            return PromptRecord(event.natural_prompt, PromptKind.POSITIVE, event.event_id)
        logger.debug(f"Event {event.event_id} has no natural prompt; using the template")
    elif style != "template":
        raise ValidationError(f"Unknown prompt style '{style}'")
    try:
        text = render_template(event.verb, event.roles)
    except TemplateError as e:
        raise TemplateError(f"event {event.event_id}: {e}") from None
    return PromptRecord(text, PromptKind.POSITIVE, event.event_id)


def render_action_prompt(event: EventAnnotation) -> PromptRecord:
    return PromptRecord(f"{PREFIX}{event.verb}.", PromptKind.ACTION_ONLY, event.event_id)


def render_class_prompt(label: str) -> str:
    """Action-only prompt for a bare class name (zero-shot classification)"""
    return f"{PREFIX}{label}."


def parse_prompt(text: str, known_roles: Iterable[str]) -> tuple[str, list[tuple[str, str]]]:
    """
    Invert the template grammar.

    Args:
        text: A prompt produced by ``render_template``
        known_roles: Role names that may appear in the prompt

    Returns:
        Tuple of (verb, [(role, noun), ...]) in prompt order
    """
    if not text.startswith(PREFIX) or not text.endswith("."):
        raise TemplateError(f"not a template prompt: {text!r}")
    body = text[len(PREFIX):-1]
    verb, sep, rest = body.partition(WHERE + "the ")
    if not sep:
        raise TemplateError(f"missing role clause: {text!r}")

    alternatives = "|".join(re.escape(r) for r in sorted(set(known_roles), key=len, reverse=True))
    last: Optional[tuple[str, str]] = None
    tail = re.search(rf", and ({alternatives}) of the event is (.*)$", rest)
    if tail:
        last = (tail.group(1), tail.group(2))
        rest = rest[: tail.start()]

    chunks = re.split(rf", (?=(?:{alternatives}) is )", rest)
    pairs = []
    for chunk in chunks:
        match = re.match(rf"({alternatives}) is (.*)$", chunk)
        if not match:
            raise TemplateError(f"cannot parse role clause {chunk!r}")
        pairs.append((match.group(1), match.group(2)))
    if last is not None:
        pairs.append(last)
    return verb, pairs
