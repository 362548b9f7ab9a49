import os
import tempfile
from pathlib import Path
from typing import Any

import orjson

CANONICAL_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_APPEND_NEWLINE


def dumps_canonical(payload: Any) -> bytes:
    """Sorted keys, fixed indentation, trailing newline."""
    return orjson.dumps(payload, option=CANONICAL_OPTIONS)


def atomic_write(path: Path, data: bytes) -> None:
    """Write to a temp file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except Exception:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_json(path: Path) -> Any:
    return orjson.loads(Path(path).read_bytes())
