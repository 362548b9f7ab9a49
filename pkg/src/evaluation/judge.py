from typing import Dict, List, Union

import loguru

from src.core.schemas import IdeaFragment
from src.evaluation.schemas import IdeaJudgeOutput, JudgeOutcome, JudgeVerdict, Level, Side, TakeawayJudgeOutput
from src.llm.exceptions import StructuredOutputError
from src.llm.schemas import ProfileName
from src.pipeline.services import Services

logger = loguru.logger

TEMPLATES = {Level.TAKEAWAY: "judge_takeaways", Level.IDEA: "judge_ideas"}
SCHEMAS = {Level.TAKEAWAY: "takeaway_judgment", Level.IDEA: "idea_judgment"}


def method_slot(position: int) -> int:
    """Method shown as Method 1 on even positions, Method 2 on odd ones."""
    return 1 if position % 2 == 0 else 2


def takeaway_text(fragment: IdeaFragment) -> str:
    lines = []
    for index, selected in enumerate(fragment.integration_mechanism.selected_takeaways, start=1):
        lines.append(f"{index}. {selected.source_domain_formulation}: {selected.mechanism_explanation}")
    return "\n".join(lines)


def _side_bindings(fragment: IdeaFragment, slot: int, level: Level) -> Dict[str, str]:
    prefix = f"method_{slot}"
    bindings = {f"{prefix}_text": takeaway_text(fragment)}
    if level is Level.IDEA:
        bindings.update(
            {
                f"{prefix}_source_domain": fragment.source_domain_name,
                f"{prefix}_proposed_approach": fragment.concrete_realization.proposed_approach,
                f"{prefix}_key_innovations": "\n".join(f"- {k}" for k in fragment.concrete_realization.key_innovations),
            }
        )
    return bindings


async def judge_pair(
    services: Services,
    problem: str,
    target_domain: str,
    method_output: IdeaFragment,
    ground_truth: IdeaFragment,
    level: Level,
    record_id: str,
    slot: int = 1,
    output_rank: int = 1,
) -> JudgeOutcome:
    """Judge one method output against the ground truth; an unusable answer yields an invalid outcome."""
    other = 2 if slot == 1 else 1
    bindings = {
        "research_problem": problem,
        "target_domain": target_domain,
        **_side_bindings(method_output, slot, level),
        **_side_bindings(ground_truth, other, level),
    }
    outcome = dict(record_id=record_id, level=level, output_rank=output_rank, method_slot=slot)
    try:
        output: Union[TakeawayJudgeOutput, IdeaJudgeOutput] = await services.gateway.complete(
            ProfileName.JUDGE, TEMPLATES[level], bindings, SCHEMAS[level]
        )
    except StructuredOutputError as e:
        logger.warning(f"Record {record_id}: {level.value} verdict for output {output_rank} is invalid, excluded: {e.detail}")
        return JudgeOutcome(**outcome, raw_response=e.raw_response, invalid_reason=e.detail)

    verdicts: List[JudgeVerdict] = [
        JudgeVerdict(
            **outcome,
            criterion=criterion,
            preferred=Side.METHOD if choice.preferred_method == slot else Side.GROUND_TRUTH,
            reasoning=choice.reasoning,
        )
        for criterion, choice in output.choices().items()
    ]
    return JudgeOutcome(**outcome, verdicts=verdicts, raw_response=output.model_dump_json())
