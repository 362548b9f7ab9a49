import asyncio
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import loguru
from pydantic import ValidationError

from src.analysis.report import emit_report, render_run_report
from src.core.exceptions import CatalystError, ConfigError, ContractError
from src.core.schemas import IdeaFragment, ResearchProblem, RunArtifact
from src.dao.storage import atomic_write, dumps_canonical
from src.evaluation.exceptions import GroundTruthError
from src.evaluation.ground_truth import GroundTruthDAO, ground_truth_for
from src.evaluation.judge import judge_pair, method_slot
from src.evaluation.schemas import ArmReport, BenchRecord, JudgeOutcome, Level, RateTable, StrategyConfig
from src.evaluation.winrate import format_rate_tables, winrate_at_k
from src.pipeline.runner import Pipeline
from src.pipeline.services import Services
from src.retrieval.domains import lookup_coarse_domain
from src.settings import PipelineSettings, Settings

logger = loguru.logger

VERDICTS_FILE = "verdicts.json"
RATES_JSON = "rates.json"
RATES_TEXT = "rates.txt"


@dataclass
class RecordResult:
    record_id: str
    outcomes: List[JudgeOutcome] = field(default_factory=list)
    error: Optional[str] = None
    ground_truth_failed: bool = False


def arm_settings(settings: Settings, config: StrategyConfig) -> Settings:
    """Settings with the arm's pipeline overrides applied and validated."""
    if not config.overrides:
        return settings
    try:
        caps = PipelineSettings.model_validate({**settings.pipeline.model_dump(), **config.overrides})
    except ValidationError as e:
        raise ConfigError(f"invalid overrides for arm {config.strategy.value}: {e.errors()[0]['msg']}")
    return settings.model_copy(update={"pipeline": caps})


def record_problem(record: BenchRecord) -> ResearchProblem:
    """The record's problem context as pipeline input; retrieval stops before its publication year."""
    if not record.problem_context.strip():
        raise ContractError(f"record {record.record_id} has no problem context")
    coarse = lookup_coarse_domain(record.target_domain_fine)
    if coarse is None:
        raise ContractError(f"record {record.record_id} has an unmapped target domain {record.target_domain_fine!r}")
    return ResearchProblem(
        statement=record.problem_context,
        target_domain_fine=record.target_domain_fine,
        target_domain_coarse=coarse,
        cutoff_year=record.arxiv_year,
    )


async def judge_record(
    services: Services,
    record: BenchRecord,
    run: RunArtifact,
    ground_truth: IdeaFragment,
    slot: int,
    depth: int,
) -> List[JudgeOutcome]:
    """Both judging levels for each of the run's top `depth` fragments."""
    calls = [
        judge_pair(
            services,
            record.problem_context,
            record.target_domain_fine,
            fragment,
            ground_truth,
            level,
            record.record_id,
            slot=slot,
            output_rank=fragment.final_rank,
        )
        for fragment in run.ranked_fragments()[:depth]
        for level in Level
    ]
    return list(await asyncio.gather(*calls))


async def _evaluate_record(
    services: Services,
    config: StrategyConfig,
    record: BenchRecord,
    slot: int,
    out_dir: Path,
    store: GroundTruthDAO,
    depth: int,
) -> Tuple[RunArtifact, List[JudgeOutcome]]:
    record_dir = out_dir / config.strategy.value / record.record_id
    run = await Pipeline(services).run(record_problem(record), record_dir, config.strategy, run_id=record.record_id)
    emit_report(render_run_report(run, services.caps.top_k), record_dir)
    if depth == 0:
        return run, []
    ground_truth = await ground_truth_for(services, record, store)
    outcomes = await judge_record(services, record, run, ground_truth, slot, depth)
    atomic_write(record_dir / VERDICTS_FILE, dumps_canonical([o.to_dict() for o in outcomes]))
    return run, outcomes


async def run_arm(
    services: Services,
    config: StrategyConfig,
    records: Iterable[BenchRecord],
    out_dir: Path,
    ks: Sequence[int] = (1, 2, 3),
    judge: bool = True,
) -> ArmReport:
    """Run one strategy over every record, judge its top outputs against ground truth, tabulate win rates.

    A failing record is reported and does not stop the others.
    """
    out_dir = Path(out_dir)
    records = sorted(records, key=lambda r: r.record_id)
    depth = max(ks) if judge and ks else 0
    store = GroundTruthDAO(out_dir)

    async def guarded(position: int, record: BenchRecord) -> RecordResult:
        try:
            _, outcomes = await _evaluate_record(services, config, record, method_slot(position), out_dir, store, depth)
        except ConfigError:
            raise
        except GroundTruthError as e:
            logger.warning(f"Arm {config.strategy.value}: {e.detail}, excluded from comparisons")
            return RecordResult(record.record_id, ground_truth_failed=True)
        except CatalystError as e:
            logger.error(f"Arm {config.strategy.value}: record {record.record_id} failed: {e.detail}")
            return RecordResult(record.record_id, error=e.detail)
        except ValidationError as e:
            detail = f"invalid {e.title}: {e.errors()[0]['msg']}"
            logger.error(f"Arm {config.strategy.value}: record {record.record_id} failed: {detail}")
            return RecordResult(record.record_id, error=detail)
        return RecordResult(record.record_id, outcomes=outcomes)

    results = await asyncio.gather(*(guarded(i, r) for i, r in enumerate(records)))
    outcomes = [o for result in results for o in result.outcomes]
    failed = {r.record_id: r.error for r in results if r.error is not None}

    tables: List[RateTable] = []
    if depth:
        tables = [winrate_at_k(outcomes, k, level, arm=config.strategy.value) for level in Level for k in sorted(ks)]
        arm_dir = out_dir / config.strategy.value
        atomic_write(arm_dir / RATES_JSON, dumps_canonical([t.to_dict() for t in tables]))
        atomic_write(arm_dir / RATES_TEXT, format_rate_tables(tables).encode("utf-8"))
    logger.info(f"Arm {config.strategy.value}: {len(records) - len(failed)}/{len(records)} records completed, {len(failed)} failed")
    return ArmReport(
        arm=config.strategy,
        completed=[r.record_id for r in results if r.error is None],
        failed=failed,
        ground_truth_failed=[r.record_id for r in results if r.ground_truth_failed],
        tables=tables,
    )
