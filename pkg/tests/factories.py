from typing import List, Optional

from src.core.fields import CoarseField
from src.core.schemas import (
    STAGE_PLANS,
    Challenge,
    ChallengeResolution,
    ConcreteRealization,
    CoverageAssessment,
    CoverageClass,
    GateResult,
    IdeaFragment,
    IntegrationMechanism,
    PaperSnippet,
    QuestionPair,
    ResearchProblem,
    RunArtifact,
    SelectedTakeaway,
    SourceDomain,
    Strategy,
    Takeaway,
)

CS = CoarseField.COMPUTER_SCIENCE
BIO = CoarseField.BIOLOGY


def snippet(paper_id: str, domain: CoarseField = CS, year: Optional[int] = 2015, relevance: Optional[bool] = True) -> PaperSnippet:
    return PaperSnippet(
        paper_id=paper_id,
        title=f"Paper {paper_id}",
        year=year,
        snippet_text=f"Text of {paper_id}.",
        query="query",
        domain=domain,
        relevance=relevance,
    )


def selected(takeaway_id: str) -> SelectedTakeaway:
    return SelectedTakeaway(
        takeaway_id=takeaway_id,
        source_domain_formulation="formulation",
        mechanism_explanation="explanation",
        selection_rationale="rationale",
    )


def fragment(
    fragment_id: str,
    source_domain: str = "dom1",
    takeaway_ids: List[str] = ("tk1",),
    source_name: str = "Biology",
    final_rank: Optional[int] = None,
    title: str = "Sleep-inspired memory consolidation for long contexts",
    **extra,
) -> IdeaFragment:
    return IdeaFragment(
        id=fragment_id,
        source_domain=source_domain,
        source_domain_name=source_name,
        title=title,
        core_insight="Consolidate context like sleep consolidates memory.",
        integration_mechanism=IntegrationMechanism(
            target_domain_elements=["attention"],
            selected_takeaways=[selected(t) for t in takeaway_ids],
            synthesis_approach="Periodic consolidation passes.",
        ),
        challenge_resolution=ChallengeResolution(
            addresses_target_challenge="Keeps salient tokens.",
            addresses_source_limitations="Makes the analogy measurable.",
            addresses_research_problem="Improves long-document reasoning.",
        ),
        concrete_realization=ConcreteRealization(proposed_approach="A consolidation layer.", key_innovations=["Replay buffer"]),
        final_rank=final_rank,
        **extra,
    )


def problem(cutoff_year: Optional[int] = 2024, target: str = "Natural Language Processing") -> ResearchProblem:
    return ResearchProblem(
        statement="Language models lose track of context in long documents.",
        target_domain_fine=target,
        target_domain_coarse=CS,
        cutoff_year=cutoff_year,
    )


def complete_run(run_id: str = "run1", strategy: Strategy = Strategy.IDEA_CATALYST) -> RunArtifact:
    """A small run with every section filled and consistent."""
    question = QuestionPair(
        id="q1",
        domain_specific="How do transformers keep early context?",
        domain_agnostic="How does a reader keep early information?",
        search_queries=["long context"],
    )
    assessment = CoverageAssessment(question_id="q1", klass=CoverageClass.OPEN, evidence=[snippet("c1")], rationale="Open. [paper:c1]")
    challenge = Challenge(
        id="ch1",
        parent_question_id="q1",
        domain_specific=question.domain_specific,
        domain_agnostic=question.domain_agnostic,
        priority_rank=1,
    )
    domain = SourceDomain(
        id="dom1",
        challenge_id="ch1",
        coarse_field=BIO,
        rationale="Memory research.",
        search_queries=["memory consolidation"],
        gate_result=GateResult.KEPT,
        relevant_count=2,
        retrieved_count=3,
        evidence=[snippet("b1", BIO), snippet("b2", BIO), snippet("b3", BIO, relevance=False)],
    )
    takeaway = Takeaway(id="tk1", source_domain="dom1", concept="Consolidation", mechanism="Replay during rest.", supporting_papers=["b1"], challenge_id="ch1")
    run = RunArtifact(
        run_id=run_id,
        strategy=strategy,
        problem=problem(),
        questions=[question],
        assessments=[assessment],
        challenges=[challenge],
        source_domains=[domain],
        takeaways=[takeaway],
        fragments=[fragment("f1", final_rank=1, copeland_score=0, challenge_id="ch1")],
    )
    for stage in STAGE_PLANS[strategy]:
        run = run.checkpoint(stage, "1970-01-01T00:00:00+00:00")
    return run


def ranked_run(run_id: str, target: str, sources: List[str]) -> RunArtifact:
    """A consistent free-form run whose ranked fragments come from `sources`, best first."""
    domains, takeaways, fragments = [], [], []
    for i, name in enumerate(sources):
        field = CoarseField.parse(name) or BIO
        domains.append(
            SourceDomain(
                id=f"d{i}",
                coarse_field=field,
                rationale="",
                search_queries=["q"],
                evidence=[snippet(f"e{i}", field)],
            )
        )
        takeaways.append(Takeaway(id=f"t{i}", source_domain=f"d{i}", concept="Concept", mechanism="Mechanism", supporting_papers=[f"e{i}"]))
        fragments.append(fragment(f"f{i}", source_domain=f"d{i}", source_name=name, final_rank=i + 1, takeaway_ids=[f"t{i}"]))
    return RunArtifact(
        run_id=run_id,
        strategy=Strategy.FREE_FORM_SOURCE,
        problem=problem(cutoff_year=None, target=target),
        source_domains=domains,
        takeaways=takeaways,
        fragments=fragments,
    )
