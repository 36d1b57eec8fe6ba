"""Exception hierarchy shared by every module.

Each class carries the exit code the CLI reports for it.
"""

from typing import Optional


class FigClipError(Exception):
    """Base class for all domain errors"""

    exit_code = 1


class ValidationError(FigClipError):
    """An input violates a documented invariant"""


class SchemaError(ValidationError):
    """Annotation JSON does not match the schema"""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class TemplateError(ValidationError):
    """A prompt cannot be rendered from its event"""


class PoolExhausted(ValidationError):
    """No distinct verb or noun is left to build a hard negative from"""


class IdenticalNegative(ValidationError):
    """A hard negative renders to the same prompt as its positive"""


class UnknownTarget(ValidationError):
    """A LoRA target names no weight of the backbone"""


class EmptyDataset(ValidationError):
    """A split has too few videos to fill one batch"""


class ConfigError(ValidationError):
    """A config key, value or override is invalid"""


class ShapeError(FigClipError, ValueError):
    """Operand shapes are incompatible"""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class AlreadyMerged(FigClipError):
    """Adapters were already folded into the weights"""


class TrainingDiverged(FigClipError):
    """The loss became NaN or infinite"""

    def __init__(self, step: int, message: Optional[str] = None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class FormatError(FigClipError):
    """A file is malformed, truncated or inconsistent"""

    exit_code = 2


class MissingEmbedding(FormatError):
    """A frame or visual id has no row in the embedding file"""
