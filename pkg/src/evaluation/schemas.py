from enum import Enum
from typing import Any, Dict, List, Optional

from typing_extensions import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.schemas import NonEmptyStr, Strategy
from src.dao.base_model import Base
from src.llm.registry import output_schema


class BenchRecord(Base):
    """One line of the benchmark JSON-lines file."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    record_id: NonEmptyStr
    target_text: str = ""
    source_text: str = ""
    target_domain_fine: str = ""
    source_domain_fine: str = ""
    relation: str = ""
    problem_context: str = ""
    arxiv_year: Optional[int] = Field(None, ge=1900)
    leakage_checked: bool = False
    abstract: Optional[str] = None


class RejectionTag(str, Enum):
    MISSING_DOMAIN = "missing_domain"
    MAPPING_FAILURE = "mapping_failure"
    SAME_COARSE_FIELD = "same_coarse_field"
    RELATION = "relation"
    LEAKAGE_UNCHECKED = "leakage_unchecked"
    MISSING_YEAR = "missing_year"


class Rejection(Base):
    record_id: str
    tags: List[RejectionTag] = Field(min_length=1)


class FilterResult(Base):
    eligible: List[BenchRecord] = Field(default_factory=list)
    rejected: List[Rejection] = Field(default_factory=list)


class Level(str, Enum):
    TAKEAWAY = "takeaway"
    IDEA = "idea"


class Criterion(str, Enum):
    INSIGHTFULNESS = "insightfulness"
    RELEVANCE = "relevance"
    NOVELTY = "novelty"
    USEFULNESS = "usefulness"
    OVERALL = "overall"


LEVEL_CRITERIA: Dict[Level, List[Criterion]] = {
    Level.TAKEAWAY: [Criterion.INSIGHTFULNESS, Criterion.RELEVANCE, Criterion.OVERALL],
    Level.IDEA: [Criterion.NOVELTY, Criterion.USEFULNESS, Criterion.OVERALL],
}


class Side(str, Enum):
    METHOD = "method"
    GROUND_TRUTH = "ground_truth"


class JudgeVerdict(Base):
    record_id: str
    level: Level
    criterion: Criterion
    preferred: Side
    reasoning: str = ""
    output_rank: int = Field(1, ge=1, description="Rank of the method output that was judged")
    method_slot: int = Field(1, ge=1, le=2, description="Whether the method was shown as Method 1 or Method 2")

    @model_validator(mode="after")
    def check_criterion(self) -> Self:
        if self.criterion not in LEVEL_CRITERIA[self.level]:
            raise ValueError(f"{self.criterion.value} is not a {self.level.value}-level criterion")
        return self


class JudgeOutcome(Base):
    """All verdicts of one judge call, or none when the judge never answered validly."""

    record_id: str
    level: Level
    output_rank: int = Field(ge=1)
    method_slot: int = Field(ge=1, le=2)
    verdicts: List[JudgeVerdict] = Field(default_factory=list)
    raw_response: Optional[str] = None
    invalid_reason: Optional[str] = None

    @property
    def valid(self) -> bool:
        return self.invalid_reason is None


class StrategyConfig(Base):
    strategy: Strategy
    overrides: Dict[str, Any] = Field(default_factory=dict, description="Pipeline caps overriding the configured ones")


class RateTable(Base):
    arm: str
    level: Level
    k: int = Field(ge=1)
    rates: Dict[Criterion, float] = Field(default_factory=dict)
    comparisons: Dict[Criterion, int] = Field(default_factory=dict)
    records: int = Field(0, ge=0)
    excluded: int = Field(0, ge=0, description="Judge calls with no valid verdict")
    short_records: List[str] = Field(default_factory=list, description="Records with fewer than k outputs")
    rule: str


class ArmReport(Base):
    arm: Strategy
    completed: List[str] = Field(default_factory=list)
    failed: Dict[str, str] = Field(default_factory=dict)
    ground_truth_failed: List[str] = Field(default_factory=list)
    tables: List[RateTable] = Field(default_factory=list)


class LeakageFinding(Base):
    record_id: str
    leaks: Optional[bool] = Field(None, description="None when the screen produced no answer")
    rationale: str = ""


class Choice(BaseModel):
    # lax int so "1" and 1 both parse
    preferred_method: int = Field(ge=1, le=2)
    reasoning: str = ""


class OverallChoice(BaseModel):
    preferred_method: int = Field(ge=1, le=2)
    summary: str = ""


class TakeawayComparison(BaseModel):
    interdisciplinary_insightfulness: Choice
    interdisciplinary_relevance: Choice


@output_schema("takeaway_judgment")
class TakeawayJudgeOutput(BaseModel):
    takeaway_comparison: TakeawayComparison
    overall_assessment: OverallChoice

    def choices(self) -> Dict[Criterion, Choice]:
        return {
            Criterion.INSIGHTFULNESS: self.takeaway_comparison.interdisciplinary_insightfulness,
            Criterion.RELEVANCE: self.takeaway_comparison.interdisciplinary_relevance,
            Criterion.OVERALL: Choice(
                preferred_method=self.overall_assessment.preferred_method,
                reasoning=self.overall_assessment.summary,
            ),
        }


class IdeaComparison(BaseModel):
    interdisciplinary_novelty: Choice
    interdisciplinary_usefulness: Choice


@output_schema("idea_judgment")
class IdeaJudgeOutput(BaseModel):
    idea_comparison: IdeaComparison
    overall_assessment: OverallChoice

    def choices(self) -> Dict[Criterion, Choice]:
        return {
            Criterion.NOVELTY: self.idea_comparison.interdisciplinary_novelty,
            Criterion.USEFULNESS: self.idea_comparison.interdisciplinary_usefulness,
            Criterion.OVERALL: Choice(
                preferred_method=self.overall_assessment.preferred_method,
                reasoning=self.overall_assessment.summary,
            ),
        }


@output_schema("containment")
class ContainmentOutput(BaseModel):
    supported: bool
    unsupported_claims: List[str] = Field(default_factory=list)


@output_schema("leakage_screen")
class LeakageScreenOutput(BaseModel):
    leaks: bool
    rationale: str = ""
