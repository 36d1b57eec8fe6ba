"""
FGCKPT1 checkpoint format (little-endian):

    magic   b"FGCKPT1"
    u32     tensor count
    per tensor:
        u16 name length, UTF-8 name
        u8  ndim, u32 x ndim dims
        f32 x prod(dims) raw data
"""

import logging
from pathlib import Path
from typing import Mapping

import numpy as np

from src.core.errors import FormatError
from src.storage.files import PathLike, atomic_write

logger = logging.getLogger(__name__)

MAGIC = b"FGCKPT1"


def save_checkpoint(path: PathLike, tensors: Mapping[str, np.ndarray]) -> Path:
    """
    Write named tensors to ``path`` as f32.

    Args:
        path: Destination file
        tensors: Mapping of parameter name to array, written in iteration order

    Returns:
        The path written
    """
    path = Path(path)
    with atomic_write(path) as handle:
        handle.write(MAGIC)
        handle.write(np.array([len(tensors)], dtype="<u4").tobytes())
        for name, value in tensors.items():
            array = np.ascontiguousarray(value, dtype="<f4")
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF or array.ndim > 0xFF:
                raise FormatError(f"Cannot encode tensor '{name}' with shape {array.shape}")
            handle.write(np.array([len(encoded)], dtype="<u2").tobytes())
            handle.write(encoded)
            handle.write(np.array([array.ndim], dtype="u1").tobytes())
            handle.write(np.array(array.shape, dtype="<u4").tobytes())
            handle.write(array.tobytes())
    logger.debug(f"Saved {len(tensors)} tensors to {path}")
    return path


class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.offset + size > len(self.payload):
            raise FormatError(f"{self.source}: truncated at byte {self.offset}")
        values = np.frombuffer(self.payload, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return values

    def take_bytes(self, count: int) -> bytes:
        if self.offset + count > len(self.payload):
            raise FormatError(f"{self.source}: truncated at byte {self.offset}")
        chunk = self.payload[self.offset:self.offset + count]
        self.offset += count
        return chunk


def load_checkpoint(path: PathLike) -> dict[str, np.ndarray]:
    """Read a checkpoint into an ordered name -> f32 array mapping"""
    path = Path(path)
    reader = _Reader(path.read_bytes(), str(path))
    if reader.take_bytes(len(MAGIC)) != MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MAGIC!r}")
    count = int(reader.take("<u4", 1)[0])
    tensors = {}
    for _ in range(count):
        name_length = int(reader.take("<u2", 1)[0])
        try:
            name = reader.take_bytes(name_length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{path}: tensor name is not UTF-8 ({e})") from None
        ndim = int(reader.take("u1", 1)[0])
        shape = tuple(int(d) for d in reader.take("<u4", ndim))
        data = reader.take("<f4", int(np.prod(shape, dtype=np.int64)))
        if name in tensors:
            raise FormatError(f"{path}: duplicate tensor name '{name}'")
        tensors[name] = data.reshape(shape).astype(np.float32)
    if reader.offset != len(reader.payload):
        raise FormatError(f"{path}: {len(reader.payload) - reader.offset} trailing bytes")
    return tensors


COUNTER_BASE = 1 << 16
COUNTER_DIGITS = 4


def encode_counter(value: int) -> np.ndarray:
    """
    Store a non-negative integer below 2**64 exactly in f32.

    The value is split into little-endian base-2**16 digits, each of which f32
    represents exactly, so element 0 alone reads back any count below 65536.
    """
    value = int(value)
    if not 0 <= value < COUNTER_BASE**COUNTER_DIGITS:
        raise FormatError(f"Counter {value} does not fit in {COUNTER_DIGITS} base-{COUNTER_BASE} digits")
    digits = [(value >> (16 * i)) & (COUNTER_BASE - 1) for i in range(COUNTER_DIGITS)]
    return np.array(digits, dtype=np.float32)


def decode_counter(array: np.ndarray) -> int:
    """Inverse of ``encode_counter``; a single-element array is read as a plain count"""
    digits = np.asarray(array, dtype=np.float64).reshape(-1)
    if digits.size == 0 or np.any(digits < 0) or np.any(digits != np.floor(digits)):
        raise FormatError(f"Counter digits {digits.tolist()} are not non-negative integers")
    if digits.size > 1 and np.any(digits >= COUNTER_BASE):
        raise FormatError(f"Counter digit out of range in {digits.tolist()}")
    return sum(int(d) << (16 * i) for i, d in enumerate(digits))
