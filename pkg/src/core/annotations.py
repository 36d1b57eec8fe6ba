"""SRL-annotated video datasets: immutable domain types, validation and the verb lexicon."""

import logging
from collections import Counter
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

from src.core.errors import ValidationError

logger = logging.getLogger(__name__)

CONTIGUITY_TOLERANCE_S = 1e-3


def normalize_role(name: str) -> str:
    return name.strip().lower()


@dataclass(frozen=True)
class RolePair:
    role: str
    noun: str

    def __post_init__(self):
        object.__setattr__(self, "role", normalize_role(self.role))
        object.__setattr__(self, "noun", self.noun.strip())
        if not self.role:
            raise ValidationError("role name is empty")
        if not self.noun:
            raise ValidationError(f"noun for role '{self.role}' is empty")


@dataclass(frozen=True)
class EventAnnotation:
    event_id: str
    verb: str
    roles: tuple[RolePair, ...]
    start_s: float
    end_s: float
    frame_refs: tuple[str, ...]
    natural_prompt: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "verb", self.verb.strip())
        object.__setattr__(self, "roles", tuple(self.roles))
        object.__setattr__(self, "frame_refs", tuple(self.frame_refs))
        if not self.verb:
            raise ValidationError(f"event {self.event_id}: verb is empty")
        if not self.start_s < self.end_s:
            raise ValidationError(
                f"event {self.event_id}: start_s {self.start_s} is not before end_s {self.end_s}"
            )
        names = [r.role for r in self.roles]
        duplicates = sorted(n for n, c in Counter(names).items() if c > 1)
        if duplicates:
            raise ValidationError(f"event {self.event_id}: duplicate role names {duplicates}")
        if not self.frame_refs:
            raise ValidationError(f"event {self.event_id}: no frame references")

    @property
    def role_names(self) -> tuple[str, ...]:
        return tuple(r.role for r in self.roles)

    @property
    def nouns(self) -> tuple[str, ...]:
        return tuple(r.noun for r in self.roles)


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    movie_id: str
    events: tuple[EventAnnotation, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        for previous, current in zip(self.events, self.events[1:]):
            if current.start_s < previous.end_s - CONTIGUITY_TOLERANCE_S:
                raise ValidationError(
                    f"video {self.video_id}: event {current.event_id} overlaps {previous.event_id}"
                )
            if current.start_s > previous.end_s + CONTIGUITY_TOLERANCE_S:
                raise ValidationError(
                    f"video {self.video_id}: gap between {previous.event_id} and {current.event_id}"
                )


@dataclass(frozen=True)
class Dataset:
    videos: tuple[VideoAnnotation, ...]
    split: str = "train"
    verb_lexicon: Mapping[str, frozenset] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "videos", tuple(self.videos))
        _validate_dataset(self.videos)
        lexicon: dict[str, set] = {}
        for event in self.events():
            lexicon.setdefault(event.verb, set()).update(event.role_names)
        object.__setattr__(
            self,
            "verb_lexicon",
            MappingProxyType({verb: frozenset(roles) for verb, roles in lexicon.items()}),
        )

    @property
    def events_per_video(self) -> int:
        return len(self.videos[0].events) if self.videos else 0

    def events(self):
        for video in self.videos:
            yield from video.events

    def video(self, video_id: str) -> VideoAnnotation:
        for video in self.videos:
            if video.video_id == video_id:
                return video
        raise KeyError(video_id)


def _validate_dataset(videos: Sequence[VideoAnnotation]) -> None:
    seen_videos, seen_events = set(), set()
    counts = set()
    for video in videos:
        if video.video_id in seen_videos:
            raise ValidationError(f"duplicate video_id {video.video_id}")
        seen_videos.add(video.video_id)
        counts.add(len(video.events))
        for event in video.events:
            if event.event_id in seen_events:
                raise ValidationError(f"video {video.video_id}: duplicate event_id {event.event_id}")
            seen_events.add(event.event_id)
    if len(counts) > 1:
        raise ValidationError(f"videos have mixed event counts {sorted(counts)}; P must be uniform")
    if counts == {0}:
        raise ValidationError("videos must contain at least one event")


def build_verb_lexicon(dataset: Dataset) -> dict[str, list[str]]:
    """
    Order each verb's role names by how often they occur with it.

    Args:
        dataset: A validated dataset

    Returns:
        Mapping of verb to role names, most frequent first, ties broken lexicographically
    """
    counts: dict[str, Counter] = {}
    for event in dataset.events():
        counts.setdefault(event.verb, Counter()).update(event.role_names)
    return {
        verb: sorted(counter, key=lambda role: (-counter[role], role))
        for verb, counter in sorted(counts.items())
    }
