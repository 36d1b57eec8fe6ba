import json
from pathlib import Path
from typing import Iterable, Iterator, Union

from src.core.errors import FormatError
from src.storage.files import atomic_write


def read_jsonl(path: Union[str, Path]) -> Iterator[dict]:
    """Lazily yield one parsed object per non-blank line; bad JSON raises FormatError with the line number"""
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{line_number}: invalid JSON ({e})") from None


def write_jsonl(path: Union[str, Path], records: Iterable[dict]) -> int:
    """Atomically write one JSON object per line; returns the record count"""
    count = 0
    with atomic_write(Path(path), mode="w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count

