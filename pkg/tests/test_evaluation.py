import random
from pathlib import Path
from typing import Optional

import orjson
import pytest
from click.testing import CliRunner

from src.cli import CliContext
from src.core.exceptions import ConfigError, ContractError
from src.core.schemas import Provenance, Strategy
from src.evaluation.dataset import filter_dataset, load_records, rejection_tags, screen_leakage
from src.evaluation.exceptions import DatasetError, GroundTruthError
from src.evaluation.ground_truth import GroundTruthDAO, ground_truth_for, restructure_ground_truth
from src.evaluation.harness import RATES_JSON, VERDICTS_FILE, arm_settings, run_arm
from src.evaluation.judge import judge_pair, method_slot
from src.evaluation.schemas import LEVEL_CRITERIA, BenchRecord, Criterion, JudgeOutcome, JudgeVerdict, Level, RejectionTag, Side, StrategyConfig
from src.evaluation.winrate import WINRATE_RULE, format_rate_tables, winrate_at_k
from src.main import cli
from src.settings import Mode
from tests.conftest import write_config
from tests.factories import fragment
from tests.fakes import FakeChat, FakeScholar

SAMPLE = Path(__file__).resolve().parent.parent / "data" / "sample_bench.jsonl"


def _record(record_id: str = "r1", **fields) -> BenchRecord:
    values = dict(
        record_id=record_id,
        target_domain_fine="Natural Language Processing",
        source_domain_fine="Neuroscience",
        relation="inspiration",
        problem_context="Language models lose track of context in long documents.",
        source_text="Replay consolidates salient memories.",
        arxiv_year=2023,
        leakage_checked=True,
    )
    values.update(fields)
    return BenchRecord(**values)


def _outcome(record_id: str, rank: int, method_wins: Optional[bool], level: Level = Level.IDEA, wins=None) -> JudgeOutcome:
    base = dict(record_id=record_id, level=level, output_rank=rank, method_slot=1)
    if method_wins is None and wins is None:
        return JudgeOutcome(**base, invalid_reason="not JSON")
    wins = wins or {c: method_wins for c in LEVEL_CRITERIA[level]}
    verdicts = [JudgeVerdict(**base, criterion=c, preferred=Side.METHOD if won else Side.GROUND_TRUTH) for c, won in wins.items()]
    return JudgeOutcome(**base, verdicts=verdicts)


def test_sample_benchmark_eligibility():
    result = filter_dataset(load_records(SAMPLE))

    assert [r.record_id for r in result.eligible] == ["bench-01", "bench-02", "bench-03", "bench-04"]
    assert {r.record_id: r.tags for r in result.rejected} == {
        "bench-05": [RejectionTag.RELATION],
        "bench-06": [RejectionTag.SAME_COARSE_FIELD],
        "bench-07": [RejectionTag.MAPPING_FAILURE],
        "bench-08": [RejectionTag.MISSING_YEAR],
        "bench-09": [RejectionTag.LEAKAGE_UNCHECKED],
        "bench-10": [RejectionTag.MISSING_DOMAIN],
    }


def test_every_failed_criterion_is_tagged():
    record = _record(source_domain_fine="Deep Learning", relation="citation", leakage_checked=False, arxiv_year=None)
    assert rejection_tags(record) == [
        RejectionTag.SAME_COARSE_FIELD,
        RejectionTag.RELATION,
        RejectionTag.LEAKAGE_UNCHECKED,
        RejectionTag.MISSING_YEAR,
    ]


def test_load_records_errors(tmp_path):
    with pytest.raises(DatasetError):
        load_records(tmp_path / "absent.jsonl")

    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"record_id": "a"}\n\n{"record_id": \n', encoding="utf-8")
    with pytest.raises(DatasetError) as excinfo:
        load_records(broken)
    assert "line 3" in excinfo.value.detail

    repeated = tmp_path / "repeated.jsonl"
    repeated.write_text('{"record_id": "a"}\n{"record_id": "a"}\n', encoding="utf-8")
    with pytest.raises(DatasetError) as excinfo:
        load_records(repeated)
    assert "repeats record id a" in excinfo.value.detail


async def test_leakage_screen_is_advisory(services):
    records = load_records(SAMPLE)

    findings = await screen_leakage(services, records)

    assert [f.record_id for f in findings] == sorted(r.record_id for r in records)
    assert [f.record_id for f in findings if f.leaks] == ["bench-09"]
    assert not next(r for r in records if r.record_id == "bench-09").leakage_checked


async def test_unanswered_leakage_screen(services, chat):
    chat.overrides["leakage_screen"] = lambda prompt: "maybe"
    [finding] = await screen_leakage(services, [_record()])
    assert finding.leaks is None


async def test_ground_truth_is_a_grounded_fragment(services, chat):
    truth = await restructure_ground_truth(services, _record())

    assert truth.provenance is Provenance.GROUND_TRUTH
    assert truth.source_domain_name == "Biology"
    assert truth.takeaway_ids == ["t1"]
    assert chat.count("containment") == 1
    assert "(no abstract available)" in chat.prompts[0]


async def test_unsupported_claims_regenerate_once(services, chat):
    chat.overrides["containment"] = lambda prompt: {"supported": False, "unsupported_claims": ["a 12% accuracy gain"]}

    await restructure_ground_truth(services, _record())

    assert chat.count("idea_fragment") == 2
    assert chat.count("containment") == 1
    assert "a 12% accuracy gain" in chat.prompts[-1]


async def test_unanswered_containment_check_passes(services, chat):
    chat.overrides["containment"] = lambda prompt: "unsure"
    await restructure_ground_truth(services, _record())
    assert chat.count("idea_fragment") == 1


async def test_ground_truth_failures(services, chat):
    with pytest.raises(ContractError):
        await restructure_ground_truth(services, _record(problem_context="  "))

    chat.overrides["idea_fragment"] = lambda prompt: "no fragment today"
    with pytest.raises(GroundTruthError) as excinfo:
        await restructure_ground_truth(services, _record("r9"))
    assert excinfo.value.record_id == "r9"


async def test_ground_truth_is_cached_per_record(services, chat, tmp_path):
    store = GroundTruthDAO(tmp_path)
    first = await ground_truth_for(services, _record(), store)
    second = await ground_truth_for(services, _record(), store)
    assert first == second
    assert chat.count("idea_fragment") == 1
    assert (tmp_path / "ground_truth" / "r1.json").exists()


def test_method_slot_alternates():
    assert [method_slot(i) for i in range(4)] == [1, 2, 1, 2]


@pytest.mark.parametrize("slot, side", [(1, Side.METHOD), (2, Side.GROUND_TRUTH)])
@pytest.mark.parametrize("level", list(Level))
async def test_judge_maps_slots_back_to_sides(services, chat, slot, side, level):
    outcome = await judge_pair(services, "problem", "NLP", fragment("m"), fragment("g"), level, "r1", slot=slot, output_rank=2)

    assert outcome.valid
    assert [v.criterion for v in outcome.verdicts] == LEVEL_CRITERIA[level]
    assert {v.preferred for v in outcome.verdicts} == {side}
    assert {(v.method_slot, v.output_rank) for v in outcome.verdicts} == {(slot, 2)}


async def test_unusable_judgment_is_an_invalid_outcome(services, chat):
    chat.overrides["idea_judgment"] = lambda prompt: {"idea_comparison": {}, "overall_assessment": {"preferred_method": 3}}

    outcome = await judge_pair(services, "problem", "NLP", fragment("m"), fragment("g"), Level.IDEA, "r1")

    assert not outcome.valid
    assert outcome.verdicts == []
    assert outcome.raw_response
    assert chat.count("idea_judgment") == services.settings.judge.attempt_budget


def test_verdict_criterion_must_match_level():
    with pytest.raises(ValueError):
        JudgeVerdict(record_id="r", level=Level.TAKEAWAY, criterion=Criterion.NOVELTY, preferred=Side.METHOD)


def test_winrate_at_one_and_two():
    outcomes = [
        _outcome("r1", 1, True),
        _outcome("r1", 2, False),
        _outcome("r2", 1, True),
        _outcome("r2", 2, True),
    ]

    at_one = winrate_at_k(outcomes, 1, Level.IDEA)
    at_two = winrate_at_k(outcomes, 2, Level.IDEA)

    assert at_one.rates == {c: 100.0 for c in LEVEL_CRITERIA[Level.IDEA]}
    assert at_two.rates == {c: 75.0 for c in LEVEL_CRITERIA[Level.IDEA]}
    assert at_two.comparisons[Criterion.NOVELTY] == 4
    assert at_two.rule == WINRATE_RULE


def test_winrate_ignores_other_levels_and_reports_short_records():
    outcomes = [_outcome("r1", 1, True), _outcome("r1", 2, True), _outcome("r2", 1, False), _outcome("r1", 1, False, Level.TAKEAWAY)]
    table = winrate_at_k(outcomes, 2, Level.IDEA, arm="x")
    assert table.short_records == ["r2"]
    assert table.records == 2
    assert table.rates[Criterion.OVERALL] == 50.0


def test_invalid_outcomes_are_excluded_not_counted_as_losses():
    table = winrate_at_k([_outcome("r1", 1, True), _outcome("r1", 2, None)], 2, Level.TAKEAWAY)
    assert table.excluded == 1
    assert table.rates[Criterion.OVERALL] == 100.0
    assert table.comparisons[Criterion.OVERALL] == 1


def test_winrate_without_valid_verdicts_has_no_rates():
    table = winrate_at_k([_outcome("r1", 1, None)], 1, Level.IDEA)
    assert table.rates == {}
    assert table.excluded == 1
    with pytest.raises(ValueError):
        winrate_at_k([], 0, Level.IDEA)


def test_winrate_matches_recount():
    rng = random.Random(11)
    outcomes = []
    for index in range(25):
        for rank in range(1, rng.randint(1, 4) + 1):
            if rng.random() < 0.1:
                outcomes.append(_outcome(f"r{index:02d}", rank, None, Level.TAKEAWAY))
            else:
                wins = {c: rng.random() < 0.6 for c in LEVEL_CRITERIA[Level.TAKEAWAY]}
                outcomes.append(_outcome(f"r{index:02d}", rank, None, Level.TAKEAWAY, wins=wins))

    for k in (1, 2, 3):
        table = winrate_at_k(outcomes, k, Level.TAKEAWAY)
        for criterion in LEVEL_CRITERIA[Level.TAKEAWAY]:
            per_record = {}
            for o in outcomes:
                if o.output_rank <= k and o.valid:
                    for v in o.verdicts:
                        if v.criterion is criterion:
                            per_record.setdefault(o.record_id, []).append(v.preferred is Side.METHOD)
            fractions = [sum(w) / len(w) for w in per_record.values()]
            assert table.rates[criterion] == pytest.approx(round(100 * sum(fractions) / len(fractions), 2))


def test_rate_table_text():
    table = winrate_at_k([_outcome("r1", 1, True)], 1, Level.IDEA, arm="idea_catalyst")
    text = format_rate_tables([table])
    assert text.startswith(f"# {WINRATE_RULE}\n")
    assert "idea_catalyst  idea   1  novelty" in text
    assert "100.00" in text


def test_arm_settings(settings):
    assert arm_settings(settings, StrategyConfig(strategy=Strategy.IDEA_CATALYST)) is settings
    capped = arm_settings(settings, StrategyConfig(strategy=Strategy.IDEA_CATALYST, overrides={"max_fragments": 2}))
    assert capped.pipeline.max_fragments == 2
    assert settings.pipeline.max_fragments == 12
    with pytest.raises(ConfigError):
        arm_settings(settings, StrategyConfig(strategy=Strategy.IDEA_CATALYST, overrides={"max_fragments": 0}))


async def test_arm_alternates_presentation_slots(services, chat, tmp_path):
    records = filter_dataset(load_records(SAMPLE)).eligible[:2]
    config = StrategyConfig(strategy=Strategy.IDEA_CATALYST)

    report = await run_arm(services, config, records, tmp_path, ks=(1,))

    assert report.completed == ["bench-01", "bench-02"]
    assert report.failed == {}
    assert [(t.level, t.k) for t in report.tables] == [(Level.TAKEAWAY, 1), (Level.IDEA, 1)]
    for table in report.tables:
        # the judge always prefers Method 1, which is the method output for the first record only
        assert set(table.rates.values()) == {50.0}
        assert table.records == 2
    arm_dir = tmp_path / Strategy.IDEA_CATALYST.value
    assert (arm_dir / RATES_JSON).exists()
    assert (arm_dir / "bench-02" / VERDICTS_FILE).exists()
    assert (tmp_path / "ground_truth" / "bench-01.json").exists()

    await run_arm(services, StrategyConfig(strategy=Strategy.NO_POTENTIAL_RANKING), records, tmp_path, ks=(1,))
    assert chat.count("containment") == 2


async def test_failing_record_does_not_stop_the_arm(services, tmp_path):
    records = [_record("bench-01"), _record("bad", target_domain_fine="Underwater Basket Weaving")]

    report = await run_arm(services, StrategyConfig(strategy=Strategy.FREE_FORM_SOURCE), records, tmp_path, judge=False)

    assert report.completed == ["bench-01"]
    assert list(report.failed) == ["bad"]
    assert report.tables == []


async def test_record_without_context_does_not_stop_the_arm(services, tmp_path):
    records = filter_dataset([_record("bench-01"), _record("empty", problem_context="  ")]).eligible

    report = await run_arm(services, StrategyConfig(strategy=Strategy.FREE_FORM_SOURCE), records, tmp_path, judge=False)

    assert report.completed == ["bench-01"]
    assert report.failed == {"empty": "record empty has no problem context"}


async def test_ground_truth_failure_excludes_the_record(services, chat, tmp_path):
    real = chat.answer_idea_fragment
    chat.overrides["idea_fragment"] = lambda prompt: "no" if "SOURCE INSIGHT" in prompt else real(prompt)

    report = await run_arm(services, StrategyConfig(strategy=Strategy.FREE_FORM_SOURCE), [_record()], tmp_path, ks=(1,))

    assert report.completed == ["r1"]
    assert report.ground_truth_failed == ["r1"]
    assert all(t.records == 0 for t in report.tables)


def _cli(args, chat=None):
    context = CliContext(s2_transport=FakeScholar().transport(), llm_transport=(chat or FakeChat()).transport())
    return CliRunner().invoke(cli, [str(a) for a in args], obj=context)


def test_evaluate_command(tmp_path):
    config = write_config(tmp_path, Mode.LIVE)
    out = tmp_path / "eval"

    result = _cli(["--config", config, "evaluate", "--records", SAMPLE, "--k", "1", "--override", "max_fragments=2", "--out", out])

    assert result.exit_code == 0, result.output
    assert "idea_catalyst: 4 completed, 0 failed" in result.output
    eligibility = orjson.loads((out / "eligibility.json").read_bytes())
    assert eligibility["eligible"] == ["bench-01", "bench-02", "bench-03", "bench-04"]
    assert len(eligibility["rejected"]) == 6
    assert (out / "evaluation.md").exists()


def test_evaluate_rejects_bad_k(tmp_path):
    result = _cli(["evaluate", "--records", SAMPLE, "--k", "0,2"])
    assert result.exit_code == 2


def test_screen_command(tmp_path):
    config = write_config(tmp_path, Mode.LIVE)
    result = _cli(["--config", config, "evaluate", "screen", "--records", SAMPLE, "--out", tmp_path / "eval"])
    assert result.exit_code == 0, result.output
    assert "1 of 10 records flagged as leaking: bench-09" in result.output
