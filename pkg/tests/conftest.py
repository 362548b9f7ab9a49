from pathlib import Path

import pytest

from src.core.fields import CoarseField
from src.core.schemas import ResearchProblem
from src.pipeline.services import build_services
from src.settings import Mode, Settings, load_settings
from tests.fakes import FakeChat, FakeScholar

LLM_ENDPOINT = "http://llm.test/v1"

CONFIG_TEMPLATE = """\
retrieval_mode = "{mode}"
fixtures_dir = "{root}/fixtures"
cache_dir = "{root}/cache"

[gen]
endpoint = "{endpoint}"
model_id = "fake-generator"
backoff_seconds = 0

[judge]
endpoint = "{endpoint}"
model_id = "fake-judge"
backoff_seconds = 0

[s2]
requests_per_second = 1000
backoff_seconds = 0
"""


def write_config(root: Path, mode: Mode = Mode.RECORD, endpoint: str = LLM_ENDPOINT) -> Path:
    path = Path(root) / "catalyst.toml"
    path.write_text(CONFIG_TEMPLATE.format(mode=mode.value, root=Path(root).as_posix(), endpoint=endpoint), encoding="utf-8")
    return path


def make_settings(root: Path, mode: Mode = Mode.LIVE, **overrides) -> Settings:
    profile = {"endpoint": LLM_ENDPOINT, "backoff_seconds": 0}
    return load_settings(
        None,
        retrieval_mode=mode,
        fixtures_dir=Path(root) / "fixtures",
        cache_dir=Path(root) / "cache",
        gen={**profile, "model_id": "fake-generator"},
        judge={**profile, "model_id": "fake-judge"},
        s2={"requests_per_second": 1000, "backoff_seconds": 0},
        **overrides,
    )


@pytest.fixture
def scholar() -> FakeScholar:
    return FakeScholar()


@pytest.fixture
def chat() -> FakeChat:
    return FakeChat()


@pytest.fixture
def settings(tmp_path: Path) -> Settings:
    return make_settings(tmp_path)


@pytest.fixture
async def services(settings: Settings, scholar: FakeScholar, chat: FakeChat):
    async with build_services(settings, scholar.transport(), chat.transport()) as services:
        yield services


@pytest.fixture
def problem() -> ResearchProblem:
    return ResearchProblem(
        statement="Language models lose track of relevant context in long documents.",
        target_domain_fine="Natural Language Processing",
        target_domain_coarse=CoarseField.COMPUTER_SCIENCE,
        cutoff_year=2024,
    )
