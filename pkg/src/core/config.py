import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from src.core.encoders import BackboneSpec
from src.core.errors import ConfigError
from src.core.lora import DEFAULT_TARGETS, WEIGHT_TYPES
from src.core.losses import TERMS, LossWeights
from src.core.tensor import DTYPES
from src.storage.files import atomic_write
from src.utils.frames import FRAME_MODES

logger = logging.getLogger(__name__)

BATCH_STRATEGIES = ("default", "shuffle_events", "same_movie")
PROMPT_STYLES = ("template", "natural")
VIDEO_LEVEL_TERMS = ("cv", "vce", "vcv")
ADAPTATIONS = ("lora", "partial", "full")

ALIASES = {"lambda": "lambda_video"}


@dataclass
class TrainConfig:
    """Every knob of a training run; the JSON config file uses these field names"""

    batch_videos: int = 20
    epochs: int = 40
    lr: float = 1e-6
    lambda_video: float = 0.25
    nvr: int = 4
    nrn: int = 0
    lora_rank: int = 64
    lora_targets: tuple = DEFAULT_TARGETS
    batch_strategy: str = "default"
    frames_per_event: int = 4
    seed: int = 0
    precision: str = "float32"
    prompt_style: str = "template"
    act_p: bool = False
    extra_negatives: bool = False
    normalize: bool = True
    fixed_scale: Optional[float] = None

    # model shape
    dim: int = 64
    tokens: int = 16
    feature_dim: int = 64
    backbone_depth: int = 4
    heads: int = 4
    mlp_ratio: int = 4
    vc_depth: int = 6
    max_events: int = 8
    max_frames: int = 8
    encoder_seed: int = 0

    # optimizer
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    # hard negatives and loss terms
    swap_fraction: float = 0.5
    hn_static: bool = False
    hn_both_directions: bool = False
    loss_terms: Optional[tuple] = None

    frame_mode: str = "jitter"
    text_lora: bool = False
    text_lora_targets: tuple = DEFAULT_TARGETS
    adaptation: str = "lora"
    text_adaptation: Optional[str] = None
    # leading encoder blocks kept frozen under partial adaptation
    frozen_blocks: int = 2
    text_depth: int = 2
    threads: Optional[int] = None
    progress: bool = False

    def __post_init__(self):
        self.lora_targets = tuple(self.lora_targets)
        self.text_lora_targets = tuple(self.text_lora_targets)
        if self.loss_terms is not None:
            self.loss_terms = tuple(self.loss_terms)

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        if not isinstance(payload, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for key, value in payload.items():
            name = ALIASES.get(key, key)
            if name not in known:
                raise ConfigError(f"Unknown config key '{key}'")
            values[name] = value
        try:
            config = cls(**values)
            config.validate()
        except TypeError as e:
            raise ConfigError(f"Config value has the wrong type ({e})") from None
        return config

    @classmethod
    def load(cls, path: Union[str, Path], overrides: Iterable[str] = ()) -> "TrainConfig":
        payload = json.loads(Path(path).read_text(encoding="utf-8")) if path else {}
        return cls.from_dict(apply_overrides(payload, overrides))

    def to_dict(self) -> dict:
        payload = dataclasses.asdict(self)
        for key, value in payload.items():
            if isinstance(value, tuple):
                payload[key] = list(value)
        return payload

    def validate(self) -> None:
        """Raise ConfigError on the first invalid field"""
        checks = [
            (self.batch_videos >= 1, f"batch_videos must be >= 1, got {self.batch_videos}"),
            (self.frames_per_event >= 1, f"frames_per_event must be >= 1, got {self.frames_per_event}"),
            (self.epochs >= 0, f"epochs must be >= 0, got {self.epochs}"),
            (self.lambda_video >= 0, f"lambda must be >= 0, got {self.lambda_video}"),
            (self.lr > 0, f"lr must be > 0, got {self.lr}"),
            (0 < self.swap_fraction < 1, f"swap_fraction must be in (0, 1), got {self.swap_fraction}"),
            (self.lora_rank >= 0, f"lora_rank must be >= 0, got {self.lora_rank}"),
            (self.nvr >= 0 and self.nrn >= 0, "nvr and nrn must be >= 0"),
            (set(self.lora_targets) <= set(WEIGHT_TYPES), f"lora_targets must be a subset of {WEIGHT_TYPES}"),
            (set(self.text_lora_targets) <= set(WEIGHT_TYPES), f"text_lora_targets must be a subset of {WEIGHT_TYPES}"),
            (self.precision in DTYPES, f"precision must be one of {sorted(DTYPES)}"),
            (self.batch_strategy in BATCH_STRATEGIES, f"batch_strategy must be one of {BATCH_STRATEGIES}"),
            (self.prompt_style in PROMPT_STYLES, f"prompt_style must be one of {PROMPT_STYLES}"),
            (self.frame_mode in FRAME_MODES, f"frame_mode must be one of {FRAME_MODES}"),
            (self.fixed_scale is None or self.fixed_scale > 0, "fixed_scale must be > 0"),
            (self.frames_per_event <= self.max_frames, "frames_per_event exceeds max_frames"),
            (self.dim % self.heads == 0, f"dim {self.dim} is not divisible by heads {self.heads}"),
            (self.threads is None or self.threads >= 1, "threads must be >= 1"),
            (self.adaptation in ADAPTATIONS, f"adaptation must be one of {ADAPTATIONS}"),
            (
                self.text_adaptation is None or self.text_adaptation in ADAPTATIONS,
                f"text_adaptation must be null or one of {ADAPTATIONS}",
            ),
            (
                not (self.text_lora and self.text_adaptation not in (None, "lora")),
                f"text_lora contradicts text_adaptation {self.text_adaptation!r}",
            ),
            (
                self.adaptation != "partial" or 0 <= self.frozen_blocks < self.backbone_depth,
                f"frozen_blocks must be in [0, backbone_depth), got {self.frozen_blocks}",
            ),
            (
                self.text_mode() != "partial" or 0 <= self.frozen_blocks < self.text_depth,
                f"frozen_blocks must be in [0, text_depth) for a partial text encoder, got {self.frozen_blocks}",
            ),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        if self.loss_terms is not None:
            unknown = sorted(set(self.loss_terms) - set(TERMS))
            if unknown:
                raise ConfigError(f"Unknown loss terms {unknown}; expected a subset of {TERMS}")
            if self.batch_strategy == "shuffle_events":
                clashing = sorted(set(self.loss_terms) & set(VIDEO_LEVEL_TERMS))
                if clashing:
                    raise ConfigError(
                        f"batch_strategy shuffle_events splits videos apart; cannot use {clashing}"
                    )
        self.loss_weights()

    def text_mode(self) -> Optional[str]:
        """How the text encoder adapts; None keeps it frozen"""
        if self.text_adaptation is not None:
            return self.text_adaptation
        return "lora" if self.text_lora else None

    @property
    def uses_vc(self) -> bool:
        return bool({"vce", "vcv"} & self.resolved_terms())

    def resolved_terms(self) -> set:
        if self.loss_terms is None:
            terms = {"ce"} if self.batch_strategy == "shuffle_events" else {"ce", "cv", "vce", "vcv"}
        else:
            terms = set(self.loss_terms)
        if self.act_p:
            terms.add("actp")
        return terms

    def loss_weights(self) -> LossWeights:
        terms = self.resolved_terms()
        return LossWeights(
            lambda_video=self.lambda_video,
            ce="ce" in terms,
            cv="cv" in terms,
            vce="vce" in terms,
            vcv="vcv" in terms,
            use_hn=self.nvr + self.nrn > 0,
            use_extra_negatives=self.extra_negatives,
            act_p="actp" in terms,
            hn_both_directions=self.hn_both_directions,
        )

    def backbone_spec(self) -> BackboneSpec:
        return BackboneSpec(
            feature_dim=self.feature_dim,
            tokens=self.tokens,
            dim=self.dim,
            depth=self.backbone_depth,
            heads=self.heads,
            mlp_ratio=self.mlp_ratio,
            normalize=self.normalize,
            seed=self.encoder_seed,
        )


def parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(payload: dict, overrides: Iterable[str]) -> dict:
    """
    Apply ``key=value`` overrides to a config mapping.

    Values are parsed as JSON when possible, else kept as strings; dotted keys
    walk into nested mappings.
    """
    payload = json.loads(json.dumps(payload))
    for override in overrides:
        key, sep, raw = override.partition("=")
        if not sep or not key:
            raise ConfigError(f"Override '{override}' is not of the form key=value")
        *parents, leaf = key.split(".")
        target = payload
        for part in parents:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"Override '{key}': '{part}' is not a mapping")
        target[leaf] = parse_value(raw)
        logger.debug(f"Config override {key}={target[leaf]!r}")
    return payload


def save_config(path: Union[str, Path], config: TrainConfig) -> None:
    with atomic_write(Path(path), mode="w", encoding="utf-8") as handle:
        json.dump(config.to_dict(), handle, indent=2)
