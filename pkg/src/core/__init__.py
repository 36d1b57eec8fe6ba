from .errors import (
    AlreadyMerged,
    ConfigError,
    EmptyDataset,
    FigClipError,
    FormatError,
    IdenticalNegative,
    MissingEmbedding,
    PoolExhausted,
    SchemaError,
    ShapeError,
    TemplateError,
    TrainingDiverged,
    UnknownTarget,
    ValidationError,
)

__all__ = [
    'AlreadyMerged',
    'ConfigError',
    'EmptyDataset',
    'FigClipError',
    'FormatError',
    'IdenticalNegative',
    'MissingEmbedding',
    'PoolExhausted',
    'SchemaError',
    'ShapeError',
    'TemplateError',
    'TrainingDiverged',
    'UnknownTarget',
    'ValidationError',
]
