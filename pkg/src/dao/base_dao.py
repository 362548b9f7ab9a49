from pathlib import Path
from typing import Generic, List, Optional, Type, TypeVar

import loguru
import orjson
from pydantic import BaseModel, ValidationError

from src.dao.storage import atomic_write, dumps_canonical

T = TypeVar("T", bound=BaseModel)

logger = loguru.logger


class BaseDAO(Generic[T]):
    """JSON-document store: one file per key under a directory."""

    model: Type[T] = None
    suffix: str = ".json"

    def __init__(self, directory: Path):
        if self.model is None:
            raise ValueError("model must be set on the subclass")
        self._directory = Path(directory)

    @property
    def directory(self) -> Path:
        return self._directory

    def _path(self, key: str) -> Path:
        return self._directory / f"{key}{self.suffix}"

    def get_one_by_id(self, key: str) -> Optional[T]:
        """Document by key, or None when absent or unreadable."""
        path = self._path(key)
        if not path.exists():
            return None
        try:
            return self.model.model_validate(orjson.loads(path.read_bytes()))
        except (orjson.JSONDecodeError, ValidationError) as e:
            logger.warning(f"Unreadable {self.model.__name__} document {path}: {e}")
            return None

    def exists(self, key: str) -> bool:
        return self._path(key).exists()

    def keys(self) -> List[str]:
        if not self._directory.exists():
            return []
        return sorted(p.name[: -len(self.suffix)] for p in self._directory.glob(f"*{self.suffix}"))

    def add(self, key: str, instance: T) -> T:
        atomic_write(self._path(key), dumps_canonical(instance.model_dump(mode="json")))
        return instance

    def delete(self, key: str) -> int:
        path = self._path(key)
        if path.exists():
            path.unlink()
            return 1
        return 0

    def count(self) -> int:
        return len(self.keys())

    def size_bytes(self) -> int:
        return sum(self._path(key).stat().st_size for key in self.keys())

    def purge(self) -> int:
        """Delete every document; returns how many were removed."""
        return sum(self.delete(key) for key in self.keys())
