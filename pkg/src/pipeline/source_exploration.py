import asyncio
from enum import Enum
from typing import List, Optional, Set, Tuple

import loguru

from src.core.exceptions import ContractError
from src.core.fields import CoarseField
from src.core.schemas import (
    Challenge,
    GateResult,
    PaperSnippet,
    ResearchProblem,
    RunArtifact,
    SourceDomain,
    Strategy,
    Takeaway,
)
from src.dao.base_model import make_id
from src.llm.exceptions import StructuredOutputError
from src.llm.schemas import ProfileName
from src.pipeline.formatting import format_evidence
from src.pipeline.schemas import DomainProposalOutput, RelevanceOutput, TakeawayOutput
from src.pipeline.services import Services
from src.pipeline.target_analysis import apply_relevance, exploration_order, gather_evidence, unknown_papers

logger = loguru.logger

GATE_RULE = "keep a source domain iff relevant/retrieved > 0.5 (strict majority); no retrieved papers prunes"
UNGROUNDED = "ungrounded takeaways"
PROPOSAL_ATTEMPTS = 2


class ProposalMode(str, Enum):
    CONSTRAINED = "constrained"
    FREE = "free"
    GUIDED = "guided"


def passes_gate(relevant: int, retrieved: int, threshold: float = 0.5) -> bool:
    """Strictly more than `threshold` of the retrieved papers must be relevant."""
    return retrieved > 0 and relevant > threshold * retrieved


def _fields_list() -> str:
    return "\n".join(f"- {f.value}" for f in CoarseField)


def _admissible(field: str, excluded: Optional[CoarseField], seen: Set[CoarseField]) -> Tuple[Optional[CoarseField], str]:
    coarse = CoarseField.parse(field)
    if coarse is None:
        return None, f"{field!r} is not an allowed field"
    if coarse is excluded:
        return None, f"{coarse.value} is the target field"
    if coarse in seen:
        return None, f"{coarse.value} was proposed twice"
    return coarse, ""


async def propose_source_domains(
    services: Services,
    challenge: Optional[Challenge],
    problem: ResearchProblem,
    mode: ProposalMode = ProposalMode.CONSTRAINED,
    context: Optional[List[PaperSnippet]] = None,
) -> List[SourceDomain]:
    """Candidate source fields; an empty list marks the challenge unexplorable."""
    caps = services.caps
    excluded = None if mode is ProposalMode.FREE else problem.target_domain_coarse
    if challenge is not None and not challenge.domain_agnostic.strip():
        raise ContractError(f"challenge {challenge.id} has no domain-agnostic form")

    bindings = {
        "target_domain": problem.target_domain_fine,
        "target_coarse": problem.target_domain_coarse.value,
        "fields": _fields_list(),
        "min_domains": str(caps.min_domains),
        "max_domains": str(caps.max_domains),
        "max_queries": str(caps.max_queries),
    }
    if mode is ProposalMode.CONSTRAINED:
        template = "propose_domains"
        bindings.update(challenge_specific=challenge.domain_specific, challenge_agnostic=challenge.domain_agnostic)
    elif mode is ProposalMode.FREE:
        template = "propose_domains_free"
        bindings.update(problem=problem.statement)
    else:
        template = "propose_domains_guided"
        bindings.update(problem=problem.statement, context=format_evidence(context or []))

    required = min(caps.min_domains, caps.max_domains)

    def check(output: DomainProposalOutput) -> List[str]:
        seen: Set[CoarseField] = set()
        reasons = []
        for candidate in output.domains:
            coarse, reason = _admissible(candidate.field, excluded, seen)
            if coarse is None:
                reasons.append(reason)
            else:
                seen.add(coarse)
        if len(seen) >= required:
            return []
        return [f"{len(seen)} usable fields, at least {required} needed: " + "; ".join(reasons or ["too few fields proposed"])]

    label = challenge.id if challenge else "problem"
    try:
        output: DomainProposalOutput = await services.gateway.complete(
            ProfileName.GENERATOR, template, bindings, "domain_proposal", validator=check, attempt_budget=PROPOSAL_ATTEMPTS
        )
    except StructuredOutputError as e:
        logger.warning(f"Challenge {label} is unexplorable: {e.detail}")
        return []

    domains: List[SourceDomain] = []
    seen: Set[CoarseField] = set()
    for candidate in output.domains:
        coarse, reason = _admissible(candidate.field, excluded, seen)
        if coarse is None:
            logger.info(f"Dropping source candidate for {label}: {reason}")
            continue
        seen.add(coarse)
        domains.append(
            SourceDomain(
                id=make_id("source_domain", challenge.id if challenge else None, len(domains)),
                challenge_id=challenge.id if challenge else None,
                coarse_field=coarse,
                rationale=candidate.rationale,
                rationale_kind=candidate.rationale_kind,
                search_queries=candidate.search_queries[: caps.max_queries],
            )
        )
        if len(domains) == caps.max_domains:
            break
    return domains


async def assess_relevance(services: Services, question_text: str, domain: SourceDomain, evidence: List[PaperSnippet]) -> List[PaperSnippet]:
    """Binary relevance of every paper against a domain-agnostic question, in one call."""
    if not evidence:
        return []
    output: RelevanceOutput = await services.gateway.complete(
        ProfileName.GENERATOR,
        "assess_relevance",
        {
            "challenge_agnostic": question_text,
            "source_field": domain.coarse_field.value,
            "evidence": format_evidence(evidence),
        },
        "relevance",
        validator=lambda output: unknown_papers(output.relevance, evidence),
    )
    return apply_relevance(evidence, output.relevance)


def gate_domain(domain: SourceDomain, evidence: List[PaperSnippet], threshold: float = 0.5) -> SourceDomain:
    retrieved = len(evidence)
    relevant = sum(1 for s in evidence if s.relevance)
    kept = passes_gate(relevant, retrieved, threshold)
    if kept:
        reason = None
    elif retrieved == 0:
        reason = "no papers retrieved"
    else:
        reason = f"{relevant}/{retrieved} papers relevant, not a majority"
    return domain.model_copy(
        update={
            "evidence": evidence,
            "relevant_count": relevant,
            "retrieved_count": retrieved,
            "gate_result": GateResult.KEPT if kept else GateResult.PRUNED,
            "prune_reason": reason,
        }
    )


async def extract_takeaways(
    services: Services,
    domain: SourceDomain,
    challenge: Optional[Challenge],
    problem: ResearchProblem,
) -> Tuple[List[Takeaway], SourceDomain]:
    """Grounded takeaways of a kept domain; the domain comes back pruned when none survive."""
    relevant = domain.relevant_evidence
    if domain.gate_result is not GateResult.KEPT or not relevant:
        raise ContractError(f"source domain {domain.id} is not kept or has no relevant evidence")
    allowed = {s.paper_id for s in relevant}
    bindings = {
        "challenge_specific": challenge.domain_specific if challenge else problem.statement,
        "challenge_agnostic": challenge.domain_agnostic if challenge else problem.statement,
        "source_field": domain.coarse_field.value,
        "evidence": format_evidence(relevant),
        "max_takeaways": str(services.caps.max_takeaways),
        "feedback": "",
    }

    output: TakeawayOutput = await services.gateway.complete(ProfileName.GENERATOR, "extract_takeaways", bindings, "takeaways")
    ungrounded = [t for t in output.takeaways if not allowed.intersection(t.supporting_paper_ids)]
    if ungrounded:
        logger.info(f"Domain {domain.id}: {len(ungrounded)} takeaways cite no retrieved paper, regenerating")
        names = "; ".join(t.concept for t in ungrounded)
        bindings["feedback"] = (
            f"\nA previous attempt produced takeaways that cite no listed paper ({names}). "
            "Every takeaway must cite at least one paper id from the list above.\n"
        )
        output = await services.gateway.complete(ProfileName.GENERATOR, "extract_takeaways", bindings, "takeaways")

    takeaways: List[Takeaway] = []
    for proposed in output.takeaways:
        papers = [p for p in dict.fromkeys(proposed.supporting_paper_ids) if p in allowed]
        if not papers:
            logger.warning(f"Domain {domain.id}: dropping ungrounded takeaway {proposed.concept!r}")
            continue
        takeaways.append(
            Takeaway(
                id=make_id("takeaway", domain.id, len(takeaways)),
                source_domain=domain.id,
                concept=proposed.concept,
                mechanism=proposed.mechanism,
                supporting_papers=papers,
                challenge_id=domain.challenge_id,
            )
        )
        if len(takeaways) == services.caps.max_takeaways:
            break

    if not takeaways:
        logger.warning(f"Domain {domain.id} pruned: {UNGROUNDED}")
        domain = domain.model_copy(update={"gate_result": GateResult.PRUNED, "prune_reason": UNGROUNDED})
    return takeaways, domain


async def explore_domain(
    services: Services,
    run: RunArtifact,
    challenge: Optional[Challenge],
    domain: SourceDomain,
) -> Tuple[SourceDomain, List[Takeaway]]:
    problem = run.problem
    evidence = await gather_evidence(services, domain.search_queries, domain.coarse_field, problem.cutoff_year)
    question_text = challenge.domain_agnostic if challenge else problem.statement
    flagged = await assess_relevance(services, question_text, domain, evidence)
    gated = gate_domain(domain, flagged, services.caps.gate_threshold)
    logger.info(f"Domain {gated.id} ({gated.coarse_field.value}): {gated.relevant_count}/{gated.retrieved_count} relevant, {gated.gate_result.value}")
    if gated.gate_result is not GateResult.KEPT:
        return gated, []
    takeaways, gated = await extract_takeaways(services, gated, challenge, problem)
    return gated, takeaways


async def run_source_exploration(services: Services, run: RunArtifact) -> RunArtifact:
    if run.strategy is Strategy.FREE_FORM_SOURCE:
        targets, mode = [None], ProposalMode.FREE
    elif run.strategy is Strategy.GUIDED_DUAL:
        targets, mode = [None], ProposalMode.GUIDED
    else:
        targets, mode = exploration_order(run), ProposalMode.CONSTRAINED

    proposals = await asyncio.gather(
        *(propose_source_domains(services, c, run.problem, mode, run.context_evidence) for c in targets)
    )
    units = [(challenge, domain) for challenge, domains in zip(targets, proposals) for domain in domains]
    explored = await asyncio.gather(*(explore_domain(services, run, c, d) for c, d in units))

    explored = sorted(explored, key=lambda pair: (pair[0].challenge_id or "", pair[0].coarse_field.value))
    domains = [domain for domain, _ in explored]
    takeaways = [t for _, batch in explored for t in batch]
    kept = sum(1 for d in domains if d.gate_result is GateResult.KEPT)
    logger.info(f"Run {run.run_id}: {kept}/{len(domains)} source domains kept, {len(takeaways)} takeaways")
    return run.model_copy(update={"source_domains": domains, "takeaways": takeaways})
