from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List

import loguru
from pydantic import BaseModel, Field

from src.core.exceptions import FixtureMissError
from src.dao.base_dao import BaseDAO
from src.dao.storage import atomic_write, dumps_canonical, read_json

logger = loguru.logger

INDEX_FILE = "index.json"


class Fixture(BaseModel):
    fingerprint: str
    namespace: str = Field(description="s2 or llm")
    request: Dict[str, Any]
    responses: Dict[str, Any] = Field(description="Raw service payloads, replayed through the same post-processing")
    recorded_at: str


class FixtureDAO(BaseDAO[Fixture]):
    """Recorded service responses, one file per request fingerprint.

    Fixtures of all namespaces share `index.json` one level up, which is what
    `fixtures verify` checks against.
    """

    model = Fixture

    def __init__(self, root: Path, namespace: str):
        super().__init__(Path(root) / namespace)
        self._root = Path(root)
        self._namespace = namespace

    @property
    def index_path(self) -> Path:
        return self._root / INDEX_FILE

    def read_index(self) -> Dict[str, Dict[str, Any]]:
        if not self.index_path.exists():
            return {}
        return read_json(self.index_path)

    def record(self, fingerprint: str, request: Dict[str, Any], responses: Dict[str, Any]) -> Fixture:
        fixture = Fixture(
            fingerprint=fingerprint,
            namespace=self._namespace,
            request=request,
            responses=responses,
            recorded_at=datetime.now(timezone.utc).isoformat(),
        )
        self.add(fingerprint, fixture)
        index = self.read_index()
        index[fingerprint] = {"namespace": self._namespace, "request": request}
        atomic_write(self.index_path, dumps_canonical(index))
        logger.debug(f"Recorded {self._namespace} fixture {fingerprint}")
        return fixture

    def replay(self, fingerprint: str) -> Fixture:
        fixture = self.get_one_by_id(fingerprint)
        if fixture is None:
            raise FixtureMissError(self._namespace, fingerprint)
        return fixture


def missing_fixtures(root: Path) -> List[str]:
    """Indexed fingerprints whose fixture file is absent."""
    root = Path(root)
    index_path = root / INDEX_FILE
    if not index_path.exists():
        return []
    index = read_json(index_path)
    return sorted(
        fingerprint
        for fingerprint, entry in index.items()
        if not (root / entry["namespace"] / f"{fingerprint}.json").exists()
    )
