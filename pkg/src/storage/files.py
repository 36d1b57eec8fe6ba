import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Union

PathLike = Union[str, Path]


@contextmanager
def atomic_write(path: PathLike, mode: str = "wb", encoding: str = None):
    """Context manager for writing a file that only appears once fully written"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, encoding=encoding) as handle:
            yield handle
        os.replace(tmp_name, path)
    finally:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
