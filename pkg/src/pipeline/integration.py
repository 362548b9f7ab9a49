import asyncio
from typing import Dict, List, Optional, Tuple

import loguru

from src.core.exceptions import ContractError
from src.core.schemas import (
    Challenge,
    FragmentBody,
    GateResult,
    IdeaFragment,
    PaperSnippet,
    ResearchProblem,
    RunArtifact,
    SourceDomain,
    Strategy,
    Takeaway,
)
from src.core.validation import validate_fragment
from src.dao.base_model import make_id
from src.llm.exceptions import StructuredOutputError
from src.llm.prompts import fragment_format
from src.llm.schemas import ProfileName
from src.pipeline.formatting import format_evidence, format_fragment, format_takeaways
from src.pipeline.schemas import FragmentOutput
from src.pipeline.services import Services
from src.pipeline.target_analysis import exploration_order

logger = loguru.logger

Unit = Tuple[Optional[Challenge], SourceDomain, List[Takeaway]]


def fragment_check(allowed_takeaways: Optional[set] = None):
    def check(output: FragmentOutput) -> List[str]:
        return [str(v) for v in validate_fragment(output.idea_fragment, allowed_takeaways=allowed_takeaways)]

    return check


async def generate_fragment(
    services: Services,
    problem: ResearchProblem,
    challenge: Optional[Challenge],
    target_evidence: List[PaperSnippet],
    domain: SourceDomain,
    takeaways: List[Takeaway],
) -> Optional[IdeaFragment]:
    """One fragment for a (challenge, kept domain) pair; None when the model never produces a valid one."""
    if not takeaways:
        raise ContractError(f"source domain {domain.id} has no takeaways to integrate")
    if any(t.source_domain != domain.id for t in takeaways):
        raise ContractError(f"takeaways passed for {domain.id} belong to another source domain")

    allowed = {t.id for t in takeaways}
    try:
        output: FragmentOutput = await services.gateway.complete(
            ProfileName.GENERATOR,
            "generate_fragment",
            {
                "problem": problem.statement,
                "target_domain": problem.target_domain_fine,
                "challenge_specific": challenge.domain_specific if challenge else problem.statement,
                "challenge_agnostic": challenge.domain_agnostic if challenge else problem.statement,
                "source_field": domain.coarse_field.value,
                "target_evidence": format_evidence(target_evidence),
                "takeaways": format_takeaways(takeaways),
                "fragment_format": fragment_format(),
            },
            "idea_fragment",
            validator=fragment_check(allowed),
        )
    except StructuredOutputError as e:
        logger.warning(f"Skipping fragment for domain {domain.id}: {e.detail}")
        return None

    return IdeaFragment(
        **output.idea_fragment.model_dump(),
        id=make_id("fragment", domain.id, 0),
        source_domain=domain.id,
        source_domain_name=domain.coarse_field.value,
        challenge_id=challenge.id if challenge else None,
    )


def target_evidence_for(run: RunArtifact, challenge: Optional[Challenge]) -> List[PaperSnippet]:
    if run.strategy is Strategy.GUIDED_DUAL:
        return run.context_evidence
    if challenge is None or challenge.parent_question_id is None:
        return []
    assessment = run.assessment_for(challenge.parent_question_id)
    return assessment.relevant_evidence if assessment else []


def integration_units(run: RunArtifact, max_fragments: int) -> List[Unit]:
    """Kept (challenge, domain) pairs, whole challenges in priority order until the cap is reached."""
    by_challenge: Dict[Optional[str], List[SourceDomain]] = {}
    for domain in run.source_domains:
        if domain.gate_result is GateResult.KEPT:
            by_challenge.setdefault(domain.challenge_id, []).append(domain)

    ordered: List[Optional[Challenge]] = exploration_order(run) if run.challenges else [None]
    units: List[Unit] = []
    for challenge in ordered:
        domains = by_challenge.get(challenge.id if challenge else None, [])
        batch = [(challenge, d, [t for t in run.takeaways if t.source_domain == d.id]) for d in domains]
        batch = [unit for unit in batch if unit[2]]
        if len(units) + len(batch) > max_fragments:
            if challenge is None:
                units.extend(batch[: max_fragments - len(units)])
            dropped = [c.id for c in ordered[ordered.index(challenge):] if c is not None]
            if dropped:
                logger.info(f"Fragment cap {max_fragments} reached, dropping challenges {', '.join(dropped)}")
            break
        units.extend(batch)
    return units


async def run_integration(services: Services, run: RunArtifact) -> RunArtifact:
    units = integration_units(run, services.caps.max_fragments)
    results = await asyncio.gather(
        *(
            generate_fragment(services, run.problem, challenge, target_evidence_for(run, challenge), domain, takeaways)
            for challenge, domain, takeaways in units
        )
    )
    fragments = sorted((f for f in results if f is not None), key=lambda f: f.id)
    logger.info(f"Run {run.run_id}: {len(fragments)} idea fragments from {len(units)} pairs")
    return run.model_copy(update={"fragments": fragments})


def structural_drift(original: FragmentBody, rewritten: FragmentBody) -> List[str]:
    """Differences in shape between two fragment bodies; prose changes are not drift."""
    drift = []
    before = [t.takeaway_id for t in original.integration_mechanism.selected_takeaways]
    after = [t.takeaway_id for t in rewritten.integration_mechanism.selected_takeaways]
    if before != after:
        drift.append(f"takeaway ids changed from {before} to {after}")
    if len(original.concrete_realization.key_innovations) != len(rewritten.concrete_realization.key_innovations):
        drift.append("key_innovations count changed")
    if len(original.integration_mechanism.target_domain_elements) != len(rewritten.integration_mechanism.target_domain_elements):
        drift.append("target_domain_elements count changed")
    return drift


async def conceptual_rewrite(services: Services, fragment: IdeaFragment) -> IdeaFragment:
    """Clearer prose with identical structure; the original is kept when the rewrite drifts."""
    try:
        output: FragmentOutput = await services.gateway.complete(
            ProfileName.GENERATOR,
            "conceptual_rewrite",
            {"fragment": format_fragment(fragment.body()), "fragment_format": fragment_format()},
            "idea_fragment",
            validator=fragment_check(set(fragment.takeaway_ids)),
        )
    except StructuredOutputError as e:
        logger.warning(f"Rewrite of fragment {fragment.id} failed, keeping original: {e.detail}")
        return fragment

    drift = structural_drift(fragment, output.idea_fragment)
    if drift:
        logger.warning(f"Rewrite of fragment {fragment.id} discarded: {'; '.join(drift)}")
        return fragment
    return fragment.model_copy(update=dict(output.idea_fragment))


async def run_conceptual_rewrite(services: Services, run: RunArtifact) -> RunArtifact:
    rewritten = await asyncio.gather(*(conceptual_rewrite(services, f) for f in run.fragments))
    return run.model_copy(update={"fragments": list(rewritten)})
