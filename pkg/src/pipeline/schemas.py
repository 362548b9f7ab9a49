from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field

from src.core.schemas import CoverageClass, FragmentBody, NonEmptyStr, RationaleKind
from src.llm.registry import output_schema


class ProposedQuestion(BaseModel):
    domain_specific: NonEmptyStr
    domain_agnostic: NonEmptyStr
    search_queries: List[NonEmptyStr] = Field(min_length=1)


@output_schema("decomposition")
class DecompositionOutput(BaseModel):
    questions: List[ProposedQuestion] = Field(min_length=1)


class RelevanceFlag(BaseModel):
    paper_id: str
    relevant: bool


@output_schema("coverage")
class CoverageOutput(BaseModel):
    relevance: List[RelevanceFlag] = Field(default_factory=list)
    klass: CoverageClass
    rationale: NonEmptyStr


class ProposedChallenge(BaseModel):
    domain_specific: NonEmptyStr
    domain_agnostic: NonEmptyStr


@output_schema("challenges")
class ChallengeOutput(BaseModel):
    challenges: List[ProposedChallenge] = Field(min_length=1)


class ProposedDomain(BaseModel):
    # Plain string so a non-member field drops one candidate, not the whole answer
    field: str
    rationale_kind: RationaleKind = RationaleKind.ANALOGY
    rationale: str = ""
    search_queries: List[NonEmptyStr] = Field(min_length=1)


@output_schema("domain_proposal")
class DomainProposalOutput(BaseModel):
    domains: List[ProposedDomain] = Field(default_factory=list)


@output_schema("target_queries")
class TargetQueriesOutput(BaseModel):
    search_queries: List[NonEmptyStr] = Field(min_length=1)


@output_schema("relevance")
class RelevanceOutput(BaseModel):
    relevance: List[RelevanceFlag] = Field(default_factory=list)


class ProposedTakeaway(BaseModel):
    concept: NonEmptyStr
    mechanism: NonEmptyStr
    supporting_paper_ids: List[str] = Field(default_factory=list)


@output_schema("takeaways")
class TakeawayOutput(BaseModel):
    takeaways: List[ProposedTakeaway] = Field(min_length=1)


@output_schema("idea_fragment")
class FragmentOutput(BaseModel):
    model_config = ConfigDict(extra="forbid")

    idea_fragment: FragmentBody


@output_schema("comparison")
class ComparisonOutput(BaseModel):
    preferred: Literal["A", "B"]
    rationale: str = ""
