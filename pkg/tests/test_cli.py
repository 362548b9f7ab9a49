from pathlib import Path

import orjson
import pytest
from click.testing import CliRunner

from src.analysis.commands import ANALYSIS_REPORT, FLOWS_FILE, STATS_FILE
from src.analysis.report import REPORT_FILE
from src.cli import CliContext
from src.core.exceptions import EXIT_CONFIG, EXIT_RUNTIME
from src.core.serialization import ARTIFACT_FILE, load_artifact, save_artifact
from src.llm.gateway import RUN_LOG_FILE
from src.main import cli
from src.settings import Mode
from tests.conftest import LLM_ENDPOINT, write_config
from tests.factories import complete_run, ranked_run
from tests.fakes import FakeChat, FakeScholar

EXAMPLE_FILE = Path(__file__).resolve().parent.parent / "data" / "examples" / "human_ai_collaboration.json"
EXAMPLE = orjson.loads(EXAMPLE_FILE.read_bytes())
PROBLEM = EXAMPLE["statement"]
TARGET = EXAMPLE["target_domain_fine"]


def _invoke(args, scholar=None, chat=None):
    context = CliContext(
        s2_transport=(scholar or FakeScholar()).transport(),
        llm_transport=(chat or FakeChat()).transport(),
    )
    return CliRunner().invoke(cli, [str(a) for a in args], obj=context)


def _ideate(config: Path, out: Path, *extra, scholar=None, chat=None):
    args = ["--config", config, *extra, "ideate", PROBLEM, "--target-domain", TARGET, "--cutoff-year", EXAMPLE["cutoff_year"], "--out", out]
    return _invoke(args, scholar, chat)


@pytest.fixture
def recorded(tmp_path):
    config = write_config(tmp_path, Mode.RECORD)
    result = _ideate(config, tmp_path / "recorded")
    assert result.exit_code == 0, result.output
    return config


def test_ideate_writes_artifact_report_and_run_log(tmp_path, recorded):
    out = tmp_path / "recorded"
    run = load_artifact(out)
    assert run.fragments
    assert (out / REPORT_FILE).read_text(encoding="utf-8").startswith("#")
    assert (out / RUN_LOG_FILE).stat().st_size > 0


def test_replay_is_byte_identical(tmp_path, recorded):
    outputs = []
    for name in ("first", "second"):
        scholar, chat = FakeScholar(failures=100), FakeChat(failures=100)
        result = _ideate(recorded, tmp_path / name, "--retrieval-mode", "replay", scholar=scholar, chat=chat)
        assert result.exit_code == 0, result.output
        assert scholar.requests == [] and chat.calls == []
        outputs.append(tmp_path / name)

    first, second = outputs
    assert (first / ARTIFACT_FILE).read_bytes() == (second / ARTIFACT_FILE).read_bytes()
    assert (first / REPORT_FILE).read_bytes() == (second / REPORT_FILE).read_bytes()
    assert load_artifact(first).fragments == load_artifact(tmp_path / "recorded").fragments


def test_replay_without_fixtures_fails(tmp_path):
    config = write_config(tmp_path, Mode.REPLAY)
    result = _ideate(config, tmp_path / "out")
    assert result.exit_code == EXIT_RUNTIME
    assert "no recorded" in result.output


def test_missing_judge_endpoint_is_a_config_error(tmp_path, monkeypatch):
    monkeypatch.delenv("IDEA_CATALYST_JUDGE_ENDPOINT", raising=False)
    config = write_config(tmp_path, Mode.LIVE)
    text = config.read_text(encoding="utf-8").replace(f'[judge]\nendpoint = "{LLM_ENDPOINT}"', '[judge]\nendpoint = ""')
    config.write_text(text, encoding="utf-8")

    result = _ideate(config, tmp_path / "out")

    assert result.exit_code == EXIT_CONFIG
    assert "IDEA_CATALYST_JUDGE_ENDPOINT" in result.output


def test_empty_problem_is_rejected(tmp_path):
    result = _invoke(["ideate", "  ", "--target-domain", "Physics", "--out", tmp_path / "out"])
    assert result.exit_code == 2
    assert "problem statement is empty" in result.output


def test_resume_with_nothing_pending(tmp_path):
    save_artifact(complete_run(), tmp_path / "run")
    result = _invoke(["resume", tmp_path / "run" / ARTIFACT_FILE])
    assert result.exit_code == 0
    assert "nothing to resume" in result.output


def test_resume_rejects_a_corrupted_artifact(tmp_path):
    path = tmp_path / ARTIFACT_FILE
    path.write_text("{not json", encoding="utf-8")
    result = _invoke(["resume", path])
    assert result.exit_code == EXIT_RUNTIME
    assert "not valid JSON" in result.output


def test_cache_commands(tmp_path, recorded):
    stats = _invoke(["--config", recorded, "cache", "stats"])
    assert stats.exit_code == 0
    assert "entries: 0" not in stats.output

    purge = _invoke(["--config", recorded, "cache", "purge"])
    assert purge.exit_code == 0
    assert "entries: 0" in _invoke(["--config", recorded, "cache", "stats"]).output


def test_cache_stats_on_empty_cache(tmp_path):
    result = _invoke(["--config", write_config(tmp_path), "cache", "stats"])
    assert result.exit_code == 0
    assert "entries: 0" in result.output


def test_fixtures_verify(tmp_path, recorded):
    ok = _invoke(["--config", recorded, "fixtures", "verify"])
    assert ok.exit_code == 0, ok.output

    next((tmp_path / "fixtures" / "s2").glob("*.json")).unlink()
    broken = _invoke(["--config", recorded, "fixtures", "verify"])
    assert broken.exit_code == EXIT_RUNTIME
    assert "missing fixture" in broken.output


def test_fixtures_record_forces_record_mode(tmp_path):
    config = write_config(tmp_path, Mode.LIVE)
    args = ["--config", config, "fixtures", "record", PROBLEM, "--target-domain", TARGET, "--out", tmp_path / "out"]
    result = _invoke(args)
    assert result.exit_code == 0, result.output
    assert list((tmp_path / "fixtures" / "llm").glob("*.json"))
    assert load_artifact(tmp_path / "out").config_snapshot["retrieval_mode"] == Mode.RECORD.value


def test_analyze(tmp_path):
    runs = tmp_path / "runs"
    save_artifact(ranked_run("a", "Natural Language Processing", ["Biology", "Physics"]), runs / "a")
    save_artifact(ranked_run("b", "Natural Language Processing", ["Biology", "Economics"]), runs / "b")

    result = _invoke(["analyze", "--runs", runs, "--min-count", 0, "--min-pair-count", 0])

    assert result.exit_code == 0, result.output
    assert "2 runs analyzed" in result.output
    assert {p.name for p in runs.iterdir() if p.is_file()} == {STATS_FILE, FLOWS_FILE, ANALYSIS_REPORT}
