from pathlib import Path

import orjson
import pytest

from src.core.exceptions import ConfigError, FixtureMissError
from src.dao.fixtures import FixtureDAO
from src.llm.exceptions import GatewayError, StructuredOutputError, UnboundPlaceholderError, UnknownTemplateError
from src.llm.gateway import LLMGateway, add_run_log, logger, strip_fences
from src.llm.prompts import placeholders, render_prompt, template_hashes, template_ids
from src.llm.schemas import ProfileName
from src.pipeline.schemas import DecompositionOutput
from src.settings import Mode, load_settings
from tests.conftest import make_settings
from tests.fakes import QUESTIONS, FakeChat

BINDINGS = {
    "problem": "Long documents confuse language models.",
    "target_domain": "Natural Language Processing",
    "min_questions": "3",
    "max_questions": "5",
    "max_queries": "3",
}


def _gateway(settings, root: Path, chat: FakeChat) -> LLMGateway:
    return LLMGateway(settings, FixtureDAO(root / "fixtures", "llm"), transport=chat.transport())


def test_every_template_renders_with_its_placeholders():
    for template_id in template_ids():
        names = placeholders(template_id)
        prompt = render_prompt(template_id, {name: f"<{name}>" for name in names})
        assert all(f"<{name}>" in prompt for name in names)


def test_unbound_placeholder_is_named():
    bindings = dict(BINDINGS)
    del bindings["max_queries"]
    with pytest.raises(UnboundPlaceholderError) as excinfo:
        render_prompt("decompose_problem", bindings)
    assert excinfo.value.placeholder == "max_queries"


def test_unknown_template():
    with pytest.raises(UnknownTemplateError):
        render_prompt("no_such_template", {})


def test_template_hashes_cover_every_resource():
    hashes = template_hashes()
    assert "fragment_format.json" in hashes
    assert {f"{t}.txt" for t in template_ids()} <= set(hashes)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ('{"a": 1}', '{"a": 1}'),
        ('```json\n{"a": 1}\n```', '{"a": 1}'),
        ('Here you go:\n```\n{"a": 1}\n```\nDone.', '{"a": 1}'),
    ],
)
def test_strip_fences(raw, expected):
    assert strip_fences(raw) == expected


async def test_structured_completion_parses_schema(settings, tmp_path, chat):
    gateway = _gateway(settings, tmp_path, chat)
    output = await gateway.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "decomposition")
    await gateway.aclose()
    assert isinstance(output, DecompositionOutput)
    assert len(output.questions) == len(QUESTIONS)


async def test_invalid_answer_is_repaired(settings, tmp_path, chat):
    answers = iter(["I think the questions are...", "```json\n" + orjson.dumps({"questions": QUESTIONS}).decode() + "\n```"])
    chat.overrides["decomposition"] = lambda prompt: next(answers)
    gateway = _gateway(settings, tmp_path, chat)

    output = await gateway.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "decomposition")
    await gateway.aclose()

    assert len(output.questions) == 3
    assert chat.count("decomposition") == 2


async def test_attempt_budget_exhausted(settings, tmp_path, chat):
    gateway = _gateway(settings, tmp_path, chat)
    with pytest.raises(StructuredOutputError) as excinfo:
        await gateway.complete(
            ProfileName.GENERATOR,
            "decompose_problem",
            BINDINGS,
            "decomposition",
            validator=lambda output: ["expected five questions"],
        )
    await gateway.aclose()
    assert chat.count("decomposition") == settings.gen.attempt_budget
    assert "questions" in excinfo.value.raw_response


async def test_transient_endpoint_errors_are_retried(settings, tmp_path):
    chat = FakeChat(failures=2)
    gateway = _gateway(settings, tmp_path, chat)
    await gateway.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "decomposition")
    await gateway.aclose()
    assert chat.count("decomposition") == 1


async def test_endpoint_down_raises_gateway_error(settings, tmp_path):
    gateway = _gateway(settings, tmp_path, FakeChat(failures=100))
    with pytest.raises(GatewayError):
        await gateway.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "decomposition")
    await gateway.aclose()


async def test_unknown_output_schema(settings, tmp_path, chat):
    gateway = _gateway(settings, tmp_path, chat)
    with pytest.raises(GatewayError):
        await gateway.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "no_such_schema")
    await gateway.aclose()


async def test_recorded_completion_replays_offline(tmp_path, chat):
    recorder = _gateway(make_settings(tmp_path, Mode.RECORD), tmp_path, chat)
    recorded = await recorder.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "decomposition")
    await recorder.aclose()

    offline = FakeChat(failures=100)
    replayer = _gateway(make_settings(tmp_path, Mode.REPLAY), tmp_path, offline)
    replayed = await replayer.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "decomposition")
    await replayer.aclose()

    assert replayed == recorded
    assert offline.calls == []


async def test_replay_key_includes_the_model(tmp_path, chat):
    recorder = _gateway(make_settings(tmp_path, Mode.RECORD), tmp_path, chat)
    await recorder.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "decomposition")
    await recorder.aclose()

    other_model = make_settings(tmp_path, Mode.REPLAY).model_copy(deep=True)
    other_model.gen.model_id = "another-model"
    replayer = _gateway(other_model, tmp_path, chat)
    with pytest.raises(FixtureMissError):
        await replayer.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "decomposition")
    await replayer.aclose()


def test_live_profile_without_endpoint_is_a_config_error(tmp_path, chat):
    settings = load_settings(None, fixtures_dir=tmp_path, gen={"endpoint": "http://llm.test/v1", "model_id": "m"})
    gateway = _gateway(settings, tmp_path, chat)
    gateway.profile(ProfileName.GENERATOR)
    with pytest.raises(ConfigError) as excinfo:
        gateway.profile(ProfileName.JUDGE)
    assert "IDEA_CATALYST_JUDGE_ENDPOINT" in excinfo.value.detail


def test_replay_needs_no_endpoint(tmp_path, chat):
    settings = load_settings(None, retrieval_mode=Mode.REPLAY, fixtures_dir=tmp_path)
    assert _gateway(settings, tmp_path, chat).profile(ProfileName.JUDGE).endpoint is None


async def test_run_log_records_every_attempt(settings, tmp_path, chat):
    answers = iter(["not json", orjson.dumps({"questions": QUESTIONS}).decode()])
    chat.overrides["decomposition"] = lambda prompt: next(answers)
    log_path = tmp_path / "llm.jsonl"
    sink = add_run_log(log_path)
    gateway = _gateway(settings, tmp_path, chat)
    try:
        await gateway.complete(ProfileName.GENERATOR, "decompose_problem", BINDINGS, "decomposition")
        logger.info("not part of the run log")
    finally:
        await gateway.aclose()
        logger.remove(sink)

    records = [orjson.loads(line)["record"]["extra"] for line in log_path.read_text().splitlines()]
    assert [r["attempt"] for r in records] == [1, 2]
    assert records[0]["outcome"].startswith("not valid JSON")
    assert records[1]["outcome"] == "ok"
    assert {r["schema"] for r in records} == {"decomposition"}
