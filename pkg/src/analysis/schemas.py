from typing import Dict, List

from pydantic import Field

from src.dao.base_model import Base


class DistributionStats(Base):
    counts: Dict[str, int] = Field(description="Coarse source field -> occurrences among top-k fragments, after filtering")
    normalized_entropy: float = Field(ge=0, le=1)
    filtered_min_count: int = Field(ge=0)
    top_k: int = Field(ge=1)
    dropped: Dict[str, int] = Field(default_factory=dict, description="Fields removed by the min-count filter")
    skipped_runs: List[str] = Field(default_factory=list, description="Run ids without ranked fragments")


class FlowRow(Base):
    target: str = Field(description="Fine target-domain label of the problem")
    source: str = Field(description="Coarse source field")
    count: int = Field(ge=1)
