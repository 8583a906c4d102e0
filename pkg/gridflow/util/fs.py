import os
import tempfile
from pathlib import Path
from typing import Union

from gridflow.util.log import LOG


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as o_file:
            o_file.write(data)
        os.replace(tmp_name, path)
    except OSError:
        try:
            os.remove(tmp_name)
        except OSError:
            pass  # cleanup if failed
        raise
    LOG.info(f"wrote {path}")
    return path


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def read_text(path: Union[str, Path]) -> str:
    with open(path, "r", encoding="utf-8") as i_file:
        return i_file.read()
