import asyncio
from typing import Dict, Iterable, List, Optional

import loguru

from src.core.exceptions import ContractError
from src.core.fields import CoarseField
from src.core.schemas import (
    Challenge,
    CoverageAssessment,
    CoverageClass,
    PaperSnippet,
    QuestionPair,
    ResearchProblem,
    RunArtifact,
)
from src.dao.base_model import make_id
from src.llm.schemas import ProfileName
from src.pipeline.formatting import format_evidence
from src.pipeline.schemas import ChallengeOutput, CoverageOutput, DecompositionOutput, RelevanceFlag, TargetQueriesOutput
from src.pipeline.services import Services
from src.retrieval.schemas import RetrievalRequest

logger = loguru.logger

NO_EVIDENCE_RATIONALE = "No relevant target-domain literature was retrieved for this question; it is treated as largely unexplored."


async def gather_evidence(
    services: Services,
    queries: Iterable[str],
    domain: CoarseField,
    cutoff_year: Optional[int],
) -> List[PaperSnippet]:
    """Results of every query, first occurrence of a paper wins."""
    requests = [
        RetrievalRequest(query=q, domain=domain, limit=services.settings.s2.limit, cutoff_year=cutoff_year)
        for q in queries
    ]
    batches = await asyncio.gather(*(services.snippets.retrieve_snippets(r) for r in requests))
    seen, merged = set(), []
    for batch in batches:
        for snippet in batch:
            if snippet.paper_id not in seen:
                seen.add(snippet.paper_id)
                merged.append(snippet)
    return merged


def apply_relevance(evidence: List[PaperSnippet], flags: Iterable[RelevanceFlag]) -> List[PaperSnippet]:
    verdicts: Dict[str, bool] = {f.paper_id: f.relevant for f in flags}
    return [s.model_copy(update={"relevance": verdicts.get(s.paper_id, False)}) for s in evidence]


def unknown_papers(flags: Iterable[RelevanceFlag], evidence: Iterable[PaperSnippet]) -> List[str]:
    known = {s.paper_id for s in evidence}
    return [f"paper id {f.paper_id} is not in the evidence list" for f in flags if f.paper_id not in known]


async def decompose_problem(services: Services, problem: ResearchProblem) -> List[QuestionPair]:
    caps = services.caps

    def check(output: DecompositionOutput) -> List[str]:
        problems = []
        if not caps.min_questions <= len(output.questions) <= caps.max_questions:
            problems.append(f"expected {caps.min_questions} to {caps.max_questions} questions, got {len(output.questions)}")
        for index, question in enumerate(output.questions):
            if question.domain_specific.casefold() == question.domain_agnostic.casefold():
                problems.append(f"question {index + 1}: domain-specific and domain-agnostic forms are identical")
        return problems

    output = await services.gateway.complete(
        ProfileName.GENERATOR,
        "decompose_problem",
        {
            "problem": problem.statement,
            "target_domain": problem.target_domain_fine,
            "min_questions": str(caps.min_questions),
            "max_questions": str(caps.max_questions),
            "max_queries": str(caps.max_queries),
        },
        "decomposition",
        validator=check,
    )
    return [
        QuestionPair(
            id=make_id("question", None, index),
            domain_specific=q.domain_specific,
            domain_agnostic=q.domain_agnostic,
            search_queries=q.search_queries[: caps.max_queries],
        )
        for index, q in enumerate(output.questions)
    ]


async def assess_coverage(
    services: Services,
    question: QuestionPair,
    evidence: List[PaperSnippet],
    target_domain: str = "the target domain",
) -> CoverageAssessment:
    if not evidence:
        return CoverageAssessment(question_id=question.id, klass=CoverageClass.OPEN, rationale=NO_EVIDENCE_RATIONALE)

    def check(output: CoverageOutput) -> List[str]:
        problems = unknown_papers(output.relevance, evidence)
        relevant = {f.paper_id for f in output.relevance if f.relevant}
        if relevant and not any(f"paper:{p}" in output.rationale for p in relevant):
            problems.append("the rationale must cite at least one relevant paper as [paper:ID]")
        return problems

    output = await services.gateway.complete(
        ProfileName.GENERATOR,
        "assess_coverage",
        {
            "question_specific": question.domain_specific,
            "question_agnostic": question.domain_agnostic,
            "target_domain": target_domain,
            "evidence": format_evidence(evidence),
        },
        "coverage",
        validator=check,
    )
    flagged = apply_relevance(evidence, output.relevance)
    klass, rationale = output.klass, output.rationale
    if not any(s.relevance for s in flagged):
        if klass is not CoverageClass.OPEN:
            logger.info(f"Question {question.id}: no relevant papers, overriding {klass.value} with open")
        klass, rationale = CoverageClass.OPEN, f"{rationale} {NO_EVIDENCE_RATIONALE}"
    return CoverageAssessment(question_id=question.id, klass=klass, evidence=flagged, rationale=rationale)


async def extract_challenges(
    services: Services,
    problem: ResearchProblem,
    question: QuestionPair,
    assessment: CoverageAssessment,
) -> List[Challenge]:
    if assessment.klass is CoverageClass.RESOLVED:
        raise ContractError(f"question {question.id} is resolved; it has no remaining challenges")
    if assessment.klass is CoverageClass.OPEN:
        return [
            Challenge(
                id=make_id("challenge", question.id, 0),
                parent_question_id=question.id,
                domain_specific=question.domain_specific,
                domain_agnostic=question.domain_agnostic,
                priority_rank=1,
            )
        ]

    output: ChallengeOutput = await services.gateway.complete(
        ProfileName.GENERATOR,
        "extract_challenges",
        {
            "problem": problem.statement,
            "target_domain": problem.target_domain_fine,
            "question_specific": question.domain_specific,
            "question_agnostic": question.domain_agnostic,
            "rationale": assessment.rationale,
            "evidence": format_evidence(assessment.relevant_evidence),
            "max_challenges": str(services.caps.max_challenges),
        },
        "challenges",
    )
    return [
        Challenge(
            id=make_id("challenge", question.id, index),
            parent_question_id=question.id,
            domain_specific=c.domain_specific,
            domain_agnostic=c.domain_agnostic,
            priority_rank=index + 1,
        )
        for index, c in enumerate(output.challenges[: services.caps.max_challenges])
    ]


async def parametric_challenges(services: Services, problem: ResearchProblem) -> List[Challenge]:
    """Challenges from model knowledge alone, without decomposition or retrieval."""
    output: ChallengeOutput = await services.gateway.complete(
        ProfileName.GENERATOR,
        "parametric_challenges",
        {
            "problem": problem.statement,
            "target_domain": problem.target_domain_fine,
            "max_challenges": str(services.caps.max_challenges),
        },
        "challenges",
    )
    return [
        Challenge(
            id=make_id("challenge", None, index),
            domain_specific=c.domain_specific,
            domain_agnostic=c.domain_agnostic,
            priority_rank=index + 1,
        )
        for index, c in enumerate(output.challenges[: services.caps.max_challenges])
    ]


async def retrieve_target_context(services: Services, problem: ResearchProblem) -> List[PaperSnippet]:
    """Representative target literature for the whole problem."""
    output: TargetQueriesOutput = await services.gateway.complete(
        ProfileName.GENERATOR,
        "target_queries",
        {
            "problem": problem.statement,
            "target_domain": problem.target_domain_fine,
            "max_queries": str(services.caps.max_queries),
        },
        "target_queries",
    )
    return await gather_evidence(
        services, output.search_queries[: services.caps.max_queries], problem.target_domain_coarse, problem.cutoff_year
    )


def exploration_order(run: RunArtifact) -> List[Challenge]:
    """Self-challenges of open questions first, then by priority, then question order."""
    question_order = {q.id: index for index, q in enumerate(run.questions)}

    def key(challenge: Challenge):
        assessment = run.assessment_for(challenge.parent_question_id) if challenge.parent_question_id else None
        is_open = assessment is not None and assessment.klass is CoverageClass.OPEN
        return (
            0 if is_open else 1,
            challenge.priority_rank,
            question_order.get(challenge.parent_question_id, -1),
            challenge.id,
        )

    return sorted(run.challenges, key=key)


async def run_decomposition(services: Services, run: RunArtifact) -> RunArtifact:
    questions = await decompose_problem(services, run.problem)
    logger.info(f"Run {run.run_id}: {len(questions)} research questions")
    return run.model_copy(update={"questions": questions})


async def run_coverage_assessment(services: Services, run: RunArtifact) -> RunArtifact:
    problem = run.problem

    async def assess(question: QuestionPair) -> CoverageAssessment:
        evidence = await gather_evidence(services, question.search_queries, problem.target_domain_coarse, problem.cutoff_year)
        return await assess_coverage(services, question, evidence, problem.target_domain_fine)

    assessments = await asyncio.gather(*(assess(q) for q in run.questions))
    for assessment in assessments:
        logger.info(f"Question {assessment.question_id}: {assessment.klass.value}, {len(assessment.relevant_evidence)}/{len(assessment.evidence)} relevant")
    return run.model_copy(update={"assessments": list(assessments)})


async def run_challenge_extraction(services: Services, run: RunArtifact) -> RunArtifact:
    if not run.questions:
        challenges = await parametric_challenges(services, run.problem)
    else:
        pending = [
            (q, a)
            for q in run.questions
            if (a := run.assessment_for(q.id)) is not None and a.klass is not CoverageClass.RESOLVED
        ]
        batches = await asyncio.gather(*(extract_challenges(services, run.problem, q, a) for q, a in pending))
        challenges = [c for batch in batches for c in batch]
    logger.info(f"Run {run.run_id}: {len(challenges)} challenges to explore")
    return run.model_copy(update={"challenges": challenges})


async def run_target_retrieval(services: Services, run: RunArtifact) -> RunArtifact:
    context = await retrieve_target_context(services, run.problem)
    logger.info(f"Run {run.run_id}: {len(context)} target papers as context")
    return run.model_copy(update={"context_evidence": context})
