import json
import logging
from pathlib import Path
from typing import Any, Union

from src.core.annotations import Dataset, EventAnnotation, RolePair, VideoAnnotation
from src.core.errors import FormatError, SchemaError, ValidationError
from src.storage.files import atomic_write

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _require(obj: dict, key: str, kind, pointer: str):
    if not isinstance(obj, dict):
        raise SchemaError("expected an object", pointer)
    if key not in obj:
        raise SchemaError(f"missing field '{key}'", pointer)
    value = obj[key]
    # bool is an int subclass; reject it where numbers are expected
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise SchemaError(f"field '{key}' must be {names}", f"{pointer}/{key}")
    return value


class AnnotationService:
    """Service for reading and writing annotation JSON files"""

    @staticmethod
    def load_dataset(path: Union[str, Path]) -> Dataset:
        """
        Load and validate an annotation file.

        Args:
            path: UTF-8 JSON file with ``figannot_version`` 1

        Returns:
            Fully validated Dataset with its verb lexicon populated
        """
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON ({e})") from None
        except UnicodeDecodeError as e:
            raise FormatError(f"{path}: not UTF-8 ({e})") from None
        dataset = AnnotationService.parse_dataset(payload)
        logger.info(
            f"Loaded {len(dataset.videos)} videos (P={dataset.events_per_video}, "
            f"{len(dataset.verb_lexicon)} verbs) from {path}"
        )
        return dataset

    @staticmethod
    def parse_dataset(payload: Any) -> Dataset:
        version = _require(payload, "figannot_version", int, "")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported figannot_version {version}", "/figannot_version")
        split = _require(payload, "split", str, "")
        raw_videos = _require(payload, "videos", list, "")
        videos = [
            AnnotationService._parse_video(raw, f"/videos/{i}") for i, raw in enumerate(raw_videos)
        ]
        return Dataset(videos=tuple(videos), split=split)

    @staticmethod
    def _parse_video(raw: Any, pointer: str) -> VideoAnnotation:
        video_id = _require(raw, "video_id", str, pointer)
        movie_id = _require(raw, "movie_id", str, pointer)
        raw_events = _require(raw, "events", list, pointer)
        events = [
            AnnotationService._parse_event(event, f"{pointer}/events/{k}")
            for k, event in enumerate(raw_events)
        ]
        return VideoAnnotation(video_id=video_id, movie_id=movie_id, events=tuple(events))

    @staticmethod
    def _parse_event(raw: Any, pointer: str) -> EventAnnotation:
        event_id = _require(raw, "event_id", str, pointer)
        start_s = float(_require(raw, "start_s", (int, float), pointer))
        end_s = float(_require(raw, "end_s", (int, float), pointer))
        verb = _require(raw, "verb", str, pointer)
        raw_roles = _require(raw, "roles", list, pointer)
        roles = []
        for j, raw_role in enumerate(raw_roles):
            role_pointer = f"{pointer}/roles/{j}"
            role = _require(raw_role, "role", str, role_pointer)
            noun = _require(raw_role, "noun", str, role_pointer)
            try:
                roles.append(RolePair(role=role, noun=noun))
            except ValidationError as e:
                raise ValidationError(f"event {event_id}: {e}") from None
        frames = _require(raw, "frames", list, pointer)
        for j, frame in enumerate(frames):
            if not isinstance(frame, str):
                raise SchemaError("frame reference must be a string", f"{pointer}/frames/{j}")
        natural_prompt = raw.get("natural_prompt")
        if natural_prompt is not None and not isinstance(natural_prompt, str):
            raise SchemaError("field 'natural_prompt' must be str", f"{pointer}/natural_prompt")
        return EventAnnotation(
            event_id=event_id,
            verb=verb,
            roles=tuple(roles),
            start_s=start_s,
            end_s=end_s,
            frame_refs=tuple(frames),
            natural_prompt=natural_prompt,
        )

    @staticmethod
    def serialize(dataset: Dataset) -> dict:
        videos = []
        for video in dataset.videos:
            events = []
            for event in video.events:
                record = {
                    "event_id": event.event_id,
                    "start_s": event.start_s,
                    "end_s": event.end_s,
                    "verb": event.verb,
                    "roles": [{"role": r.role, "noun": r.noun} for r in event.roles],
                    "frames": list(event.frame_refs),
                }
                if event.natural_prompt is not None:
                    record["natural_prompt"] = event.natural_prompt
                events.append(record)
            videos.append({"video_id": video.video_id, "movie_id": video.movie_id, "events": events})
        return {"figannot_version": SCHEMA_VERSION, "split": dataset.split, "videos": videos}

    @staticmethod
    def save_dataset(path: Union[str, Path], dataset: Dataset) -> Path:
        path = Path(path)
        with atomic_write(path, mode="w", encoding="utf-8") as handle:
            json.dump(AnnotationService.serialize(dataset), handle, indent=2)
        return path
