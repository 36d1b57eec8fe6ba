"""
FGEMB1 embedding files: magic b"FGEMB1", u32 N, u32 d, N x d f32 LE,
plus a ``<file>.ids.jsonl`` sidecar with one {"row": i, "id": "..."} per line.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from src.core.errors import FormatError, MissingEmbedding
from src.storage.files import PathLike, atomic_write

logger = logging.getLogger(__name__)

MAGIC = b"FGEMB1"


@dataclass
class EmbeddingMatrix:
    """N x d row store addressable by string id"""

    data: np.ndarray
    ids: list[str]
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise FormatError(f"Embedding data must be 2-D, got shape {self.data.shape}")
        if len(self.ids) != self.data.shape[0]:
            raise FormatError(f"{len(self.ids)} ids for {self.data.shape[0]} rows")
        self._index = {}
        for row, identifier in enumerate(self.ids):
            if identifier in self._index:
                raise FormatError(f"Duplicate embedding id '{identifier}'")
            self._index[identifier] = row

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row_of(self, identifier: str) -> int:
        try:
            return self._index[identifier]
        except KeyError:
            raise MissingEmbedding(f"No embedding with id '{identifier}'") from None

    def vector(self, identifier: str) -> np.ndarray:
        return self.data[self.row_of(identifier)]

    def __contains__(self, identifier: str) -> bool:
        return identifier in self._index

    @classmethod
    def from_rows(cls, rows: Sequence[np.ndarray], ids: Sequence[str], dim: int) -> "EmbeddingMatrix":
        data = np.stack(rows) if len(rows) else np.zeros((0, dim), dtype=np.float32)
        return cls(data, list(ids))


def ids_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".ids.jsonl")


def save_embeddings(path: PathLike, matrix: EmbeddingMatrix) -> Path:
    path = Path(path)
    with atomic_write(path) as handle:
        handle.write(MAGIC)
        handle.write(np.array([matrix.rows, matrix.dim], dtype="<u4").tobytes())
        handle.write(matrix.data.astype("<f4").tobytes())
    with atomic_write(ids_path(path), mode="w", encoding="utf-8") as handle:
        for row, identifier in enumerate(matrix.ids):
            handle.write(json.dumps({"row": row, "id": identifier}) + "\n")
    logger.debug(f"Saved {matrix.rows}x{matrix.dim} embeddings to {path}")
    return path


def load_embeddings(path: PathLike) -> EmbeddingMatrix:
    path = Path(path)
    payload = path.read_bytes()
    header = len(MAGIC) + 8
    if payload[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MAGIC!r}")
    if len(payload) < header:
        raise FormatError(f"{path}: truncated header")
    rows, dim = (int(v) for v in np.frombuffer(payload, dtype="<u4", count=2, offset=len(MAGIC)))
    expected = header + rows * dim * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {rows}x{dim}, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<f4", count=rows * dim, offset=header).reshape(rows, dim)

    sidecar = ids_path(path)
    if not sidecar.exists():
        raise FormatError(f"{path}: missing id sidecar {sidecar.name}")
    ids = []
    for line_number, line in enumerate(sidecar.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            row, identifier = int(record["row"]), str(record["id"])
        except (ValueError, KeyError, TypeError) as e:
            raise FormatError(f"{sidecar}:{line_number + 1}: bad id record ({e})") from None
        if row != len(ids):
            raise FormatError(f"{sidecar}:{line_number + 1}: expected row {len(ids)}, found {row}")
        ids.append(identifier)
    return EmbeddingMatrix(data.astype(np.float32), ids)
