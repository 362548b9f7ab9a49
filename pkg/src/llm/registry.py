from typing import Callable, Dict, Type, TypeVar

from pydantic import BaseModel

M = TypeVar("M", bound=Type[BaseModel])

OUTPUT_SCHEMAS: Dict[str, Type[BaseModel]] = {}


def output_schema(name: str) -> Callable[[M], M]:
    """Register a model as the expected shape of a structured completion."""

    def register(model: M) -> M:
        if name in OUTPUT_SCHEMAS and OUTPUT_SCHEMAS[name] is not model:
            raise ValueError(f"output schema {name!r} registered twice")
        OUTPUT_SCHEMAS[name] = model
        return model

    return register
