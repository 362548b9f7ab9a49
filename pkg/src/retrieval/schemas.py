from typing import List, Optional

from pydantic import BaseModel, Field

from src.core.fields import CoarseField
from src.core.schemas import NonEmptyStr, PaperSnippet
from src.dao.base_model import Base, fingerprint
from src.llm.registry import output_schema


class RetrievalRequest(Base):
    query: NonEmptyStr
    domain: CoarseField
    limit: int = Field(20, ge=1, le=20, description="Papers per round")
    cutoff_year: Optional[int] = Field(None, ge=1900)

    def fingerprint(self, endpoint_version: str) -> str:
        return fingerprint(
            {
                "query": self.query,
                "domain": self.domain.value,
                "limit": self.limit,
                "cutoff_year": self.cutoff_year,
                "endpoint_version": endpoint_version,
            }
        )


class CacheEntry(BaseModel):
    fingerprint: str
    response: List[PaperSnippet]
    fetched_at: str


@output_schema("domain_classification")
class DomainClassification(BaseModel):
    field: str = Field(description="Exactly one of the 23 coarse field names")
    rationale: str = ""
