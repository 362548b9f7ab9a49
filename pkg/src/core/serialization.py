from pathlib import Path

import loguru
import orjson
from pydantic import ValidationError

from src.core.exceptions import ArtifactCorruptedError
from src.core.schemas import SCHEMA_VERSION, RunArtifact
from src.core.validation import check_integrity
from src.dao.storage import atomic_write, dumps_canonical

logger = loguru.logger

ARTIFACT_FILE = "artifact.json"


def canonical_serialize(artifact: RunArtifact) -> bytes:
    """Deterministic UTF-8 JSON; refuses artifacts with dangling references."""
    check_integrity(artifact)
    return dumps_canonical(artifact.model_dump(mode="json"))


def deserialize(data: bytes) -> RunArtifact:
    try:
        document = orjson.loads(data)
    except orjson.JSONDecodeError as e:
        raise ArtifactCorruptedError(f"artifact is not valid JSON: {e}")
    if not isinstance(document, dict) or document.get("schema_version") != SCHEMA_VERSION:
        raise ArtifactCorruptedError(f"artifact is not a schema_version {SCHEMA_VERSION} run document")
    try:
        return RunArtifact.model_validate(document)
    except ValidationError as e:
        raise ArtifactCorruptedError(f"artifact does not match the run schema: {e.error_count()} errors, first: {e.errors()[0]['msg']}")


def save_artifact(artifact: RunArtifact, out_dir: Path) -> Path:
    path = Path(out_dir) / ARTIFACT_FILE
    atomic_write(path, canonical_serialize(artifact))
    logger.debug(f"Artifact {artifact.run_id} written to {path}")
    return path


def load_artifact(path: Path) -> RunArtifact:
    """Read an artifact file (or a run directory holding one)."""
    path = Path(path)
    if path.is_dir():
        path = path / ARTIFACT_FILE
    if not path.exists():
        raise ArtifactCorruptedError(f"no artifact at {path}")
    return deserialize(path.read_bytes())
