from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, List, Optional

import loguru
from pydantic import ValidationError

from src.core.exceptions import CatalystError, ConfigError
from src.core.schemas import STAGE_PLANS, ResearchProblem, RunArtifact, Stage, Strategy
from src.core.serialization import save_artifact
from src.dao.base_model import fingerprint
from src.evaluation.winrate import WINRATE_RULE
from src.llm.prompts import template_hashes
from src.llm.schemas import ProfileName
from src.pipeline.exceptions import StageError
from src.pipeline.integration import run_conceptual_rewrite, run_integration
from src.pipeline.ranking import run_ranking
from src.pipeline.services import Services
from src.pipeline.source_exploration import GATE_RULE, run_source_exploration
from src.pipeline.target_analysis import (
    run_challenge_extraction,
    run_coverage_assessment,
    run_decomposition,
    run_target_retrieval,
)
from src.settings import Mode

logger = loguru.logger

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc).isoformat()

StageHandler = Callable[[Services, RunArtifact], Awaitable[RunArtifact]]

STAGE_HANDLERS: Dict[Stage, StageHandler] = {
    Stage.DECOMPOSITION: run_decomposition,
    Stage.COVERAGE_ASSESSMENT: run_coverage_assessment,
    Stage.CHALLENGE_EXTRACTION: run_challenge_extraction,
    Stage.TARGET_RETRIEVAL: run_target_retrieval,
    Stage.SOURCE_EXPLORATION: run_source_exploration,
    Stage.INTEGRATION: run_integration,
    Stage.RANKING: run_ranking,
    Stage.CONCEPTUAL_REWRITE: run_conceptual_rewrite,
}


def profiles_for(strategy: Strategy) -> List[ProfileName]:
    """Model profiles a strategy calls; every arm but proportion ranking uses the judge."""
    if strategy is Strategy.NO_POTENTIAL_RANKING:
        return [ProfileName.GENERATOR]
    return [ProfileName.GENERATOR, ProfileName.JUDGE]


def make_run_id(problem: ResearchProblem, strategy: Strategy) -> str:
    return fingerprint({"problem": problem.model_dump(mode="json"), "strategy": strategy.value})[:12]


def pending_stages(run: RunArtifact) -> List[Stage]:
    return [stage for stage in STAGE_PLANS[run.strategy] if stage not in run.stage_checkpoints]


class Pipeline:
    """Runs a strategy's stage plan, checkpointing and saving the artifact after each stage."""

    def __init__(self, services: Services, clock: Optional[Callable[[], str]] = None):
        self._services = services
        self._clock = clock or self._default_clock

    def _default_clock(self) -> str:
        if self._services.settings.retrieval_mode is Mode.REPLAY:
            return EPOCH
        return datetime.now(timezone.utc).isoformat()

    def config_snapshot(self, strategy: Strategy) -> Dict[str, Any]:
        snapshot = self._services.settings.snapshot()
        snapshot.update(
            strategy=strategy.value,
            templates=template_hashes(),
            gate_rule=GATE_RULE,
            winrate_rule=WINRATE_RULE,
        )
        return snapshot

    def start(self, problem: ResearchProblem, strategy: Strategy = Strategy.IDEA_CATALYST, run_id: Optional[str] = None) -> RunArtifact:
        for profile in profiles_for(strategy):
            self._services.gateway.profile(profile)
        return RunArtifact(
            run_id=run_id or make_run_id(problem, strategy),
            strategy=strategy,
            problem=problem,
            config_snapshot=self.config_snapshot(strategy),
        )

    async def run(
        self,
        problem: ResearchProblem,
        out_dir: Path,
        strategy: Strategy = Strategy.IDEA_CATALYST,
        run_id: Optional[str] = None,
    ) -> RunArtifact:
        run = self.start(problem, strategy, run_id)
        save_artifact(run, out_dir)
        return await self.resume(run, out_dir)

    async def resume(self, run: RunArtifact, out_dir: Path) -> RunArtifact:
        """Execute the stages without a checkpoint; finished sections are reused as they are."""
        for profile in profiles_for(run.strategy):
            self._services.gateway.profile(profile)
        for stage in pending_stages(run):
            logger.info(f"Run {run.run_id}: stage {stage.value} started")
            try:
                run = await STAGE_HANDLERS[stage](self._services, run)
            except ConfigError:
                raise
            except CatalystError as e:
                # the artifact on disk still ends at the previous checkpoint
                raise StageError(stage.value, e.detail) from e
            except ValidationError as e:
                raise StageError(stage.value, f"invalid {e.title}: {e.errors()[0]['msg']}") from e
            run = run.checkpoint(stage, self._clock())
            save_artifact(run, out_dir)
            logger.info(f"Run {run.run_id}: stage {stage.value} checkpointed")
        return run
