import logging
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from src.core.annotations import Dataset, EventAnnotation, RolePair, VideoAnnotation, build_verb_lexicon
from src.core.encoders import TextEmbedder
from src.core.errors import PoolExhausted, ValidationError
from src.core.negatives import batch_verb_pool, make_verb_role_negatives
from src.core.prompting import render_event_prompt
from src.core.tensor import precision
from src.storage.embeddings import EmbeddingMatrix
from src.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

# verb, agent role, second role, kind of noun the second role takes
VERB_VOCABULARY = [
    ("walk", "walker", None, None),
    ("speak", "talker", "hearer", "person"),
    ("open", "opener", "thing opened", "thing"),
    ("bow", "bower", "bowed to", "person"),
    ("look", "looker", "thing looked at", "thing"),
    ("smash", "smasher", "smashed", "thing"),
    ("jog", "jogger", None, None),
    ("respond", "replier", "responded to", "person"),
    ("push", "pusher", "thing pushed", "thing"),
    ("hug", "hugger", "hugged", "person"),
    ("throw", "thrower", "thing thrown", "thing"),
    ("sit", "sitter", None, None),
    ("drive", "driver", "vehicle", "thing"),
    ("point", "pointer", "pointed at", "person"),
    ("hold", "holder", "thing held", "thing"),
    ("run", "runner", None, None),
]

PEOPLE = [
    "man with short hair wearing collared shirt",
    "woman with scarf",
    "guy in white shirt",
    "woman in glasses",
    "bald man in black shorts",
    "man wearing black",
    "girl in red coat",
    "boy with backpack",
    "old man with cane",
    "woman in white coat",
]
THINGS = [
    "trunk of taxi",
    "speedboat",
    "glass vase",
    "front door",
    "letter",
    "suitcase",
    "umbrella",
    "bicycle",
    "red ball",
    "laptop",
]
MANNERS = ["slowly", "quickly", "angrily", "calmly", "shocked", "abruptly", "carefully", "nervously", "happily", "annoyed"]
SCENES = ["apartment", "auditorium", "an airplane", "living room", "near a taxi", "in a hotel room", "kitchen", "street", "office", "park"]
DIRECTIONS = ["forward", "backward", "to the left", "to the right", "upstairs", "downstairs", "away", "toward camera", "around", "across"]


@dataclass(frozen=True)
class PlantedSpec:
    """Toy-data configuration"""

    videos: int = 32
    heldout_videos: int = 8
    events_per_video: int = 5
    frames_per_event: int = 4
    verbs: int = 8
    nouns_per_role: int = 6
    movies: int = 4
    noise: float = 0.1
    tokens: int = 16
    feature_dim: int = 64
    dim: int = 64
    encoder_seed: int = 0
    event_seconds: float = 2.0

    def validate(self) -> None:
        if not 1 <= self.verbs <= len(VERB_VOCABULARY):
            raise ValidationError(f"verbs must be in [1, {len(VERB_VOCABULARY)}], got {self.verbs}")
        if not 1 <= self.nouns_per_role <= len(PEOPLE):
            raise ValidationError(f"nouns_per_role must be in [1, {len(PEOPLE)}], got {self.nouns_per_role}")
        if self.videos < 1 or self.events_per_video < 1 or self.frames_per_event < 1:
            raise ValidationError("videos, events_per_video and frames_per_event must be positive")
        if self.heldout_videos < 0 or self.movies < 1 or self.noise < 0:
            raise ValidationError("heldout_videos and noise must be >= 0 and movies >= 1")


@dataclass
class PlantedData:
    train: Dataset
    heldout: Optional[Dataset]
    features: EmbeddingMatrix
    oracle: np.ndarray
    spec: PlantedSpec

    def decode(self, grid: np.ndarray) -> np.ndarray:
        """Invert the planted linear map on a (..., tokens, feature_dim) grid"""
        flat = np.asarray(grid, dtype=np.float64).reshape(*np.shape(grid)[:-2], -1)
        return flat @ np.linalg.pinv(self.oracle).T


class PlantedDataService:
    """Synthetic SRL videos whose frame features are noisy linear images of their prompt embeddings"""

    @staticmethod
    def generate(spec: PlantedSpec, seed: int) -> PlantedData:
        """
        Generate a planted training split and a held-out split.

        Args:
            spec: Vocabulary sizes, shapes and noise level
            seed: Controls annotations, oracle map and noise

        Returns:
            PlantedData whose frame refs are ``emb:<row>`` into ``features``
        """
        spec.validate()
        rng = np.random.default_rng(derive_seed(seed, 0))
        oracle = np.random.default_rng(derive_seed(seed, 1)).standard_normal(
            (spec.tokens * spec.feature_dim, spec.dim)
        )
        with precision("float64"):
            embedder = TextEmbedder(dim=spec.dim, seed=spec.encoder_seed)

        vocabulary = VERB_VOCABULARY[: spec.verbs]
        nouns = {
            "person": PEOPLE[: spec.nouns_per_role],
            "thing": THINGS[: spec.nouns_per_role],
            "manner": MANNERS[: spec.nouns_per_role],
            "scene": SCENES[: spec.nouns_per_role],
            "direction": DIRECTIONS[: spec.nouns_per_role],
        }

        rows: list[np.ndarray] = []
        ids: list[str] = []

        def plant(text: str, prefix: str) -> list[str]:
            with precision("float64"):
                target = embedder.embed(text).data
            refs = []
            for j in range(spec.frames_per_event):
                feature = oracle @ target + spec.noise * rng.standard_normal(oracle.shape[0])
                refs.append(f"emb:{len(rows)}")
                ids.append(f"{prefix}:{j}")
                rows.append(feature.astype(np.float32))
            return refs

        def make_video(index: int, split: str) -> VideoAnnotation:
            video_id = f"{split}{index:04d}"
            scene = nouns["scene"][rng.integers(len(nouns["scene"]))]
            events = []
            for k in range(spec.events_per_video):
                verb, agent, second, kind = vocabulary[rng.integers(len(vocabulary))]
                roles = [RolePair(agent, nouns["person"][rng.integers(len(nouns["person"]))])]
                if second is not None:
                    pool = nouns[kind]
                    roles.append(RolePair(second, pool[rng.integers(len(pool))]))
                else:
                    roles.append(RolePair("direction", nouns["direction"][rng.integers(len(nouns["direction"]))]))
                roles.append(RolePair("manner", nouns["manner"][rng.integers(len(nouns["manner"]))]))
                roles.append(RolePair("scene", scene))
                event_id = f"{video_id}_e{k}"
                draft = EventAnnotation(
                    event_id=event_id,
                    verb=verb,
                    roles=tuple(roles),
                    start_s=k * spec.event_seconds,
                    end_s=(k + 1) * spec.event_seconds,
                    frame_refs=("pending",),
                )
                refs = plant(render_event_prompt(draft).text, f"{video_id}:{k}")
                events.append(
                    EventAnnotation(
                        event_id=event_id,
                        verb=verb,
                        roles=draft.roles,
                        start_s=draft.start_s,
                        end_s=draft.end_s,
                        frame_refs=tuple(refs),
                    )
                )
            return VideoAnnotation(video_id=video_id, movie_id=f"movie{index % spec.movies}", events=tuple(events))

        train = Dataset(tuple(make_video(v, "train") for v in range(spec.videos)), split="train")
        heldout = (
            Dataset(tuple(make_video(v, "heldout") for v in range(spec.heldout_videos)), split="heldout")
            if spec.heldout_videos
            else None
        )
        features = EmbeddingMatrix.from_rows(rows, ids, spec.tokens * spec.feature_dim)
        logger.info(
            f"Planted {spec.videos}+{spec.heldout_videos} videos, {features.rows} frames, noise={spec.noise}"
        )
        return PlantedData(train=train, heldout=heldout, features=features, oracle=oracle, spec=spec)

    @staticmethod
    def compose_cases(dataset: Dataset, negatives: int, seed: int) -> list[dict]:
        """
        Two-caption compositional cases: each event's positive prompt against verb-role negatives
        drawn from the verbs of the whole dataset.
        """
        lexicon = build_verb_lexicon(dataset)
        verbs = batch_verb_pool(list(dataset.events()), lexicon)
        cases = []
        for index, event in enumerate(dataset.events()):
            try:
                records = make_verb_role_negatives(event, verbs, negatives, derive_seed(seed, index))
            except PoolExhausted as e:
                logger.warning(f"Skipping compose case: {e}")
                continue
            cases.append(
                {
                    "case_id": event.event_id,
                    "visual_id": event.event_id,
                    "positive": render_event_prompt(event).text,
                    "negatives": [r.text for r in records],
                }
            )
        return cases


def planted_pair_generator(spec: PlantedSpec, seed: int) -> Iterator[tuple[np.ndarray, EventAnnotation]]:
    """Yield (frame grid of shape (frames, tokens, feature_dim), event) for every planted training event"""
    data = PlantedDataService.generate(spec, seed)
    for event in data.train.events():
        rows = [int(ref[4:]) for ref in event.frame_refs]
        grid = data.features.data[rows].reshape(len(rows), spec.tokens, spec.feature_dim)
        yield grid, event
