from enum import Enum
from typing import Annotated, Any, Dict, List, Optional

from typing_extensions import Self

from pydantic import AfterValidator, Field, model_validator

from src.core.fields import CoarseField
from src.dao.base_model import Base

SCHEMA_VERSION = "1"
MAX_TITLE_WORDS = 15


class Strategy(str, Enum):
    IDEA_CATALYST = "idea_catalyst"
    FREE_FORM_SOURCE = "free_form_source"
    GUIDED_DUAL = "guided_dual"
    NO_DECOMPOSE = "no_decompose"
    NO_POTENTIAL_RANKING = "no_potential_ranking"
    PLUS_REWRITE = "plus_rewrite"


class Stage(str, Enum):
    DECOMPOSITION = "decomposition"
    COVERAGE_ASSESSMENT = "coverage_assessment"
    CHALLENGE_EXTRACTION = "challenge_extraction"
    TARGET_RETRIEVAL = "target_retrieval"
    SOURCE_EXPLORATION = "source_exploration"
    INTEGRATION = "integration"
    RANKING = "ranking"
    CONCEPTUAL_REWRITE = "conceptual_rewrite"


class SourceKind(str, Enum):
    SNIPPET = "snippet"
    ABSTRACT_FALLBACK = "abstract_fallback"


class CoverageClass(str, Enum):
    RESOLVED = "resolved"
    PARTIAL = "partial"
    OPEN = "open"


class GateResult(str, Enum):
    PENDING = "pending"
    KEPT = "kept"
    PRUNED = "pruned"


class RationaleKind(str, Enum):
    ANALOGY = "analogy"
    SHARED_MECHANISM = "shared_mechanism"
    TRANSFERABLE_PRINCIPLE = "transferable_principle"


class Provenance(str, Enum):
    GENERATED = "generated"
    GROUND_TRUTH = "ground_truth"


class Verdict(str, Enum):
    A = "a"
    B = "b"


class Resolution(str, Enum):
    A_WINS = "a_wins"
    B_WINS = "b_wins"
    TIE = "tie"


def _non_empty(value: str) -> str:
    if not value or not value.strip():
        raise ValueError("must be non-empty")
    return value.strip()


NonEmptyStr = Annotated[str, AfterValidator(_non_empty)]


class ResearchProblem(Base):
    statement: NonEmptyStr = Field(description="Short problem statement, 1-2 sentences")
    target_domain_fine: NonEmptyStr = Field(description="Free-text target field, e.g. Natural Language Processing")
    target_domain_coarse: CoarseField = Field(description="One of the 23 Semantic Scholar fields")
    cutoff_year: Optional[int] = Field(None, ge=1900, description="Exclusive upper bound on paper year")


class QuestionPair(Base):
    id: str
    domain_specific: NonEmptyStr = Field(description="Question in target-domain vocabulary")
    domain_agnostic: NonEmptyStr = Field(description="Same question without jargon")
    search_queries: List[str] = Field(min_length=1)

    @model_validator(mode="after")
    def check_distinct(self) -> Self:
        if self.domain_specific.casefold() == self.domain_agnostic.casefold():
            raise ValueError("domain-specific and domain-agnostic forms must differ")
        return self


class PaperSnippet(Base):
    paper_id: str
    title: str
    year: Optional[int] = None
    snippet_text: NonEmptyStr
    source_kind: SourceKind = SourceKind.SNIPPET
    query: str
    domain: CoarseField
    relevance: Optional[bool] = None

    @model_validator(mode="after")
    def check_fallback(self) -> Self:
        if self.source_kind is SourceKind.ABSTRACT_FALLBACK and self.snippet_text == self.title.strip():
            raise ValueError("abstract fallback text must differ from the title")
        return self


class CoverageAssessment(Base):
    question_id: str
    klass: CoverageClass
    evidence: List[PaperSnippet] = Field(default_factory=list)
    rationale: str

    @property
    def relevant_evidence(self) -> List[PaperSnippet]:
        return [s for s in self.evidence if s.relevance]


class Challenge(Base):
    id: str
    parent_question_id: Optional[str] = Field(None, description="None for parametric (no-decompose) challenges")
    domain_specific: NonEmptyStr
    domain_agnostic: NonEmptyStr
    priority_rank: int = Field(ge=1)


class SourceDomain(Base):
    id: str
    challenge_id: Optional[str] = Field(None, description="None when the whole problem is explored")
    coarse_field: CoarseField
    rationale: str
    rationale_kind: RationaleKind = RationaleKind.ANALOGY
    search_queries: List[str] = Field(min_length=1)
    gate_result: GateResult = GateResult.PENDING
    relevant_count: int = Field(0, ge=0)
    retrieved_count: int = Field(0, ge=0)
    evidence: List[PaperSnippet] = Field(default_factory=list)
    prune_reason: Optional[str] = None

    @model_validator(mode="after")
    def check_gate(self) -> Self:
        if self.relevant_count > self.retrieved_count:
            raise ValueError("relevant_count cannot exceed retrieved_count")
        if self.gate_result is GateResult.KEPT and not self.relevant_count * 2 > self.retrieved_count:
            raise ValueError("kept domains need a strict majority of relevant papers")
        return self

    @property
    def relevant_fraction(self) -> float:
        return self.relevant_count / self.retrieved_count if self.retrieved_count else 0.0

    @property
    def relevant_evidence(self) -> List[PaperSnippet]:
        return [s for s in self.evidence if s.relevance]


class Takeaway(Base):
    id: str
    source_domain: str = Field(description="SourceDomain id")
    concept: NonEmptyStr = Field(description="Named source-domain concept or framework")
    mechanism: NonEmptyStr = Field(description="How the concept works against the challenge")
    supporting_papers: List[str] = Field(min_length=1, description="Paper ids from the domain's relevant evidence")
    challenge_id: Optional[str] = None


class SelectedTakeaway(Base):
    takeaway_id: str
    source_domain_formulation: str
    mechanism_explanation: str
    selection_rationale: str


class IntegrationMechanism(Base):
    target_domain_elements: List[str]
    selected_takeaways: List[SelectedTakeaway]
    synthesis_approach: str


class ChallengeResolution(Base):
    addresses_target_challenge: str
    addresses_source_limitations: str
    addresses_research_problem: str


class ConcreteRealization(Base):
    proposed_approach: str
    key_innovations: List[str]


class FragmentBody(Base):
    """The `idea_fragment` tree exactly as the output format lays it out."""

    title: str
    core_insight: str
    integration_mechanism: IntegrationMechanism
    challenge_resolution: ChallengeResolution
    concrete_realization: ConcreteRealization


class IdeaFragment(FragmentBody):
    id: str
    source_domain: str = Field(description="SourceDomain id")
    source_domain_name: str = Field(description="Human-readable source field")
    challenge_id: Optional[str] = None
    provenance: Provenance = Provenance.GENERATED
    copeland_score: Optional[int] = None
    final_rank: Optional[int] = None

    def body(self) -> FragmentBody:
        return FragmentBody.model_validate(self.model_dump(include=set(FragmentBody.model_fields)))

    @property
    def takeaway_ids(self) -> List[str]:
        return [t.takeaway_id for t in self.integration_mechanism.selected_takeaways]


class PairwiseJudgment(Base):
    fragment_a: str
    fragment_b: str
    verdict_ab: Optional[Verdict] = Field(None, description="Preference with a presented first")
    verdict_ba: Optional[Verdict] = Field(None, description="Preference with b presented first")
    resolved: Resolution
    rationale: str = ""

    @model_validator(mode="after")
    def check_resolution(self) -> Self:
        if self.fragment_a == self.fragment_b:
            raise ValueError("a fragment cannot be compared with itself")
        if self.resolved is not resolve_verdicts(self.verdict_ab, self.verdict_ba):
            raise ValueError("resolution disagrees with the two orderings")
        return self


def resolve_verdicts(verdict_ab: Optional[Verdict], verdict_ba: Optional[Verdict]) -> Resolution:
    """a wins only when both orderings prefer a; likewise b; anything else ties."""
    if verdict_ab is Verdict.A and verdict_ba is Verdict.A:
        return Resolution.A_WINS
    if verdict_ab is Verdict.B and verdict_ba is Verdict.B:
        return Resolution.B_WINS
    return Resolution.TIE


class RunArtifact(Base):
    schema_version: str = SCHEMA_VERSION
    run_id: str
    strategy: Strategy = Strategy.IDEA_CATALYST
    problem: ResearchProblem
    questions: List[QuestionPair] = Field(default_factory=list)
    assessments: List[CoverageAssessment] = Field(default_factory=list)
    challenges: List[Challenge] = Field(default_factory=list)
    context_evidence: List[PaperSnippet] = Field(default_factory=list)
    source_domains: List[SourceDomain] = Field(default_factory=list)
    takeaways: List[Takeaway] = Field(default_factory=list)
    fragments: List[IdeaFragment] = Field(default_factory=list)
    judgments: List[PairwiseJudgment] = Field(default_factory=list)
    stage_checkpoints: Dict[Stage, str] = Field(default_factory=dict)
    config_snapshot: Dict[str, Any] = Field(default_factory=dict)

    def question(self, question_id: str) -> Optional[QuestionPair]:
        return next((q for q in self.questions if q.id == question_id), None)

    def assessment_for(self, question_id: str) -> Optional[CoverageAssessment]:
        return next((a for a in self.assessments if a.question_id == question_id), None)

    def challenge(self, challenge_id: str) -> Optional[Challenge]:
        return next((c for c in self.challenges if c.id == challenge_id), None)

    def domain(self, domain_id: str) -> Optional[SourceDomain]:
        return next((d for d in self.source_domains if d.id == domain_id), None)

    def takeaway(self, takeaway_id: str) -> Optional[Takeaway]:
        return next((t for t in self.takeaways if t.id == takeaway_id), None)

    def ranked_fragments(self) -> List[IdeaFragment]:
        """Fragments with a final rank, best first."""
        ranked = [f for f in self.fragments if f.final_rank is not None]
        return sorted(ranked, key=lambda f: f.final_rank)

    def checkpoint(self, stage: Stage, timestamp: str) -> "RunArtifact":
        checkpoints = dict(self.stage_checkpoints)
        checkpoints[stage] = timestamp
        return self.model_copy(update={"stage_checkpoints": checkpoints})


_TARGET_ANALYSIS = [Stage.DECOMPOSITION, Stage.COVERAGE_ASSESSMENT, Stage.CHALLENGE_EXTRACTION]
_DOWNSTREAM = [Stage.SOURCE_EXPLORATION, Stage.INTEGRATION, Stage.RANKING]

STAGE_PLANS: Dict[Strategy, List[Stage]] = {
    Strategy.IDEA_CATALYST: _TARGET_ANALYSIS + _DOWNSTREAM,
    Strategy.NO_POTENTIAL_RANKING: _TARGET_ANALYSIS + _DOWNSTREAM,
    Strategy.PLUS_REWRITE: _TARGET_ANALYSIS + _DOWNSTREAM + [Stage.CONCEPTUAL_REWRITE],
    Strategy.NO_DECOMPOSE: [Stage.CHALLENGE_EXTRACTION] + _DOWNSTREAM,
    Strategy.FREE_FORM_SOURCE: list(_DOWNSTREAM),
    Strategy.GUIDED_DUAL: [Stage.TARGET_RETRIEVAL] + _DOWNSTREAM,
}
