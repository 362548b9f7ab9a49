import hashlib
from typing import Any

import orjson
from pydantic import BaseModel, ConfigDict


def make_id(stage: str, parent_id: str | None, ordinal: int) -> str:
    """Deterministic 12-hex id from (stage, parent, ordinal); stable across resumes."""
    raw = f"{stage}:{parent_id or 'root'}:{ordinal}".encode("utf-8")
    return hashlib.sha256(raw).hexdigest()[:12]


def fingerprint(payload: Any) -> str:
    """sha256 over the canonical JSON of an arbitrary payload."""
    raw = orjson.dumps(payload, option=orjson.OPT_SORT_KEYS)
    return hashlib.sha256(raw).hexdigest()


class Base(BaseModel):
    """Immutable value object shared by every domain type."""

    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)

    def to_dict(self, exclude_none: bool = False) -> dict:
        """Plain JSON-compatible dict of the model."""
        return self.model_dump(mode="json", exclude_none=exclude_none)

    def __repr__(self) -> str:
        ident = getattr(self, "id", None)
        if ident is None:
            return super().__repr__()
        return f"<{self.__class__.__name__}(id={ident})>"
