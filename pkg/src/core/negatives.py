"""
Hard-negative prompts.

Verb-role negatives swap the verb and rename its verb-specific roles while the
nouns stay; role-noun negatives keep verb and roles and swap some (never all)
of the nouns.
"""

import logging
import math
from typing import Mapping, Optional, Sequence

import numpy as np

from src.core.annotations import EventAnnotation, RolePair
from src.core.errors import IdenticalNegative, PoolExhausted, ValidationError
from src.core.prompting import Perturbation, PromptKind, PromptRecord, render_template

logger = logging.getLogger(__name__)

COMMON_ROLES = frozenset({"direction", "manner", "scene"})
# draws per requested role-noun negative before the sampler gives up
MAX_DRAWS_PER_NEGATIVE = 100

VerbRoles = tuple[str, Sequence[str]]


def _specific(roles: Sequence[str]) -> list[str]:
    return [role for role in roles if role not in COMMON_ROLES]


def _checked(event: EventAnnotation, verb: str, roles: Sequence[RolePair]) -> str:
    text = render_template(verb, roles)
    if text == render_template(event.verb, event.roles):
        raise IdenticalNegative(f"event {event.event_id}: negative renders identically to the positive")
    return text


def _renamed_roles(event: EventAnnotation, verb_roles: Sequence[str]):
    replacement = _specific(verb_roles)
    roles, log = [], []
    position = 0
    for index, pair in enumerate(event.roles):
        if pair.role in COMMON_ROLES:
            roles.append(pair)
            continue
        if position < len(replacement):
            new_name = replacement[position]
            roles.append(RolePair(new_name, pair.noun))
            if new_name != pair.role:
                log.append(Perturbation(f"role[{index}]", pair.role, new_name))
        else:
            log.append(Perturbation(f"role[{index}]", pair.role, ""))
        position += 1
    return roles, log


def swap_verb(event: EventAnnotation, verb: str, verb_roles: Sequence[str]) -> PromptRecord:
    """
    Build one verb-role negative.

    Args:
        event: The positive event
        verb: Replacement verb, different from the event's verb
        verb_roles: The replacement verb's role names in lexicon order

    Returns:
        PromptRecord of kind hn_verb_role
    """
    if verb == event.verb:
        raise ValidationError(f"event {event.event_id}: replacement verb equals '{verb}'")
    roles, log = _renamed_roles(event, verb_roles)
    if not roles:
        raise PoolExhausted(f"event {event.event_id}: verb '{verb}' leaves no roles")
    return PromptRecord(
        text=_checked(event, verb, roles),
        kind=PromptKind.HN_VERB_ROLE,
        source_event_id=event.event_id,
        perturbation_log=(Perturbation("verb", event.verb, verb), *log),
    )


def swap_nouns(event: EventAnnotation, replacements: Mapping[str, str]) -> PromptRecord:
    """Build one role-noun negative from an explicit role -> new noun mapping"""
    names = event.role_names
    unknown = sorted(set(replacements) - set(names))
    if unknown:
        raise ValidationError(f"event {event.event_id}: unknown roles {unknown}")
    roles, log = [], []
    for index, pair in enumerate(event.roles):
        noun = replacements.get(pair.role, pair.noun)
        if noun != pair.noun:
            log.append(Perturbation(f"noun[{index}]", pair.noun, noun))
        roles.append(RolePair(pair.role, noun))
    if not log:
        raise ValidationError(f"event {event.event_id}: replacements change no noun")
    if len(log) == len(roles):
        raise ValidationError(f"event {event.event_id}: replacements change every noun")
    return PromptRecord(
        text=_checked(event, event.verb, roles),
        kind=PromptKind.HN_ROLE_NOUN,
        source_event_id=event.event_id,
        perturbation_log=tuple(log),
    )


def make_verb_role_negatives(
    event: EventAnnotation,
    batch_verbs: Sequence[VerbRoles],
    n: int,
    rng_seed,
) -> list[PromptRecord]:
    """
    Sample ``n`` verb-role negatives for ``event`` from the verbs of its batch.

    Replacement verbs are drawn without replacement; once the pool is used up
    it is reshuffled and drawn again.
    """
    if n < 0:
        raise ValidationError(f"negative count must be >= 0, got {n}")
    if n == 0:
        return []

    pool, seen = [], {event.verb}
    for verb, roles in batch_verbs:
        if verb in seen:
            continue
        seen.add(verb)
        try:
            swap_verb(event, verb, roles)
        except (PoolExhausted, IdenticalNegative):
            continue
        pool.append((verb, tuple(roles)))
    if not pool:
        raise PoolExhausted(f"event {event.event_id}: no replacement verb for '{event.verb}' in batch")

    rng = np.random.default_rng(rng_seed)
    records = []
    order: list[int] = []
    while len(records) < n:
        if not order:
            order = list(rng.permutation(len(pool)))
        verb, roles = pool[order.pop(0)]
        records.append(swap_verb(event, verb, roles))
    return records


def _distinct(nouns: Optional[Sequence[str]], current: str) -> list[str]:
    return sorted({noun for noun in (nouns or ()) if noun != current})


def make_role_noun_negatives(
    event: EventAnnotation,
    noun_pool: Mapping[str, Sequence[str]],
    n: int,
    swap_fraction: float,
    rng_seed,
) -> list[PromptRecord]:
    """
    Sample ``n`` role-noun negatives, each swapping ceil(swap_fraction * R) nouns (at most R - 1).

    Replacement nouns come from the pool for the same role, falling back to
    every noun in the pool when that role offers nothing different.
    """
    if not 0.0 < swap_fraction < 1.0:
        raise ValidationError(f"swap_fraction must be in (0, 1), got {swap_fraction}")
    if n < 0:
        raise ValidationError(f"negative count must be >= 0, got {n}")
    if n == 0:
        return []
    count = len(event.roles)
    if count < 2:
        raise ValidationError(f"event {event.event_id}: cannot swap some but not all of {count} role")

    any_role = sorted({noun for nouns in noun_pool.values() for noun in nouns})
    candidates = {}
    for pair in event.roles:
        options = _distinct(noun_pool.get(pair.role), pair.noun) or _distinct(any_role, pair.noun)
        if options:
            candidates[pair.role] = options
    if not candidates:
        raise PoolExhausted(f"event {event.event_id}: no distinct noun in pool")

    eligible = [i for i, pair in enumerate(event.roles) if pair.role in candidates]
    k = min(max(1, math.ceil(swap_fraction * count)), count - 1, len(eligible))

    rng = np.random.default_rng(rng_seed)
    records = []
    for _ in range(MAX_DRAWS_PER_NEGATIVE * n):
        chosen = sorted(rng.choice(eligible, size=k, replace=False))
        replacements = {}
        for index in chosen:
            role = event.roles[index].role
            options = candidates[role]
            replacements[role] = options[int(rng.integers(len(options)))]
        try:
            records.append(swap_nouns(event, replacements))
        except IdenticalNegative as e:
            logger.debug(f"Redrawing role-noun negative: {e}")
            continue
        if len(records) == n:
            return records
    raise PoolExhausted(f"event {event.event_id}: every noun swap renders identically to the positive")


def batch_verb_pool(events: Sequence[EventAnnotation], lexicon: Mapping[str, Sequence[str]]) -> list[VerbRoles]:
    """Distinct verbs of ``events`` (first occurrence order) with their lexicon roles"""
    pool, seen = [], set()
    for event in events:
        if event.verb not in seen:
            seen.add(event.verb)
            pool.append((event.verb, tuple(lexicon.get(event.verb, event.role_names))))
    return pool


def batch_noun_pool(events: Sequence[EventAnnotation]) -> dict[str, list[str]]:
    pool: dict[str, set] = {}
    for event in events:
        for pair in event.roles:
            pool.setdefault(pair.role, set()).add(pair.noun)
    return {role: sorted(nouns) for role, nouns in sorted(pool.items())}


def hard_negatives_for_event(
    event: EventAnnotation,
    batch_verbs: Sequence[VerbRoles],
    noun_pool: Mapping[str, Sequence[str]],
    nvr: int,
    nrn: int,
    swap_fraction: float,
    seed: np.random.SeedSequence,
) -> list[PromptRecord]:
    """
    Verb-role then role-noun negatives for one event.

    Unsatisfiable requests are skipped with a warning so a batch never fails
    on a single event.
    """
    verb_seed, noun_seed = seed.spawn(2)
    records = []
    try:
        records.extend(make_verb_role_negatives(event, batch_verbs, nvr, verb_seed))
    except PoolExhausted as e:
        logger.warning(f"Skipping verb-role negatives: {e}")
    try:
        records.extend(make_role_noun_negatives(event, noun_pool, nrn, swap_fraction, noun_seed))
    except (PoolExhausted, ValidationError) as e:
        logger.warning(f"Skipping role-noun negatives: {e}")
    return records
