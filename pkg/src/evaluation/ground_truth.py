from pathlib import Path
from typing import Dict

import loguru

from src.core.exceptions import ContractError
from src.core.schemas import FragmentBody, IdeaFragment, Provenance
from src.dao.base_dao import BaseDAO
from src.dao.base_model import make_id
from src.evaluation.exceptions import GroundTruthError
from src.evaluation.schemas import BenchRecord, ContainmentOutput
from src.llm.exceptions import StructuredOutputError
from src.llm.prompts import fragment_format
from src.llm.schemas import ProfileName
from src.pipeline.formatting import format_fragment
from src.pipeline.integration import fragment_check
from src.pipeline.schemas import FragmentOutput
from src.pipeline.services import Services
from src.retrieval.domains import lookup_coarse_domain

logger = loguru.logger

NO_ABSTRACT = "(no abstract available)"


class GroundTruthDAO(BaseDAO[IdeaFragment]):
    """Restructured ground-truth fragments, one per record; shared by every arm."""

    model = IdeaFragment

    def __init__(self, out_dir: Path):
        super().__init__(Path(out_dir) / "ground_truth")


def _material(record: BenchRecord) -> Dict[str, str]:
    return {
        "problem_context": record.problem_context,
        "abstract": record.abstract or NO_ABSTRACT,
        "source_text": record.source_text,
    }


async def _unsupported_claims(services: Services, record: BenchRecord, body: FragmentBody) -> list[str]:
    """Claims the containment check finds outside the record; an unanswered check passes."""
    try:
        output: ContainmentOutput = await services.gateway.complete(
            ProfileName.JUDGE,
            "containment_check",
            {**_material(record), "fragment": format_fragment(body)},
            "containment",
        )
    except StructuredOutputError as e:
        logger.warning(f"Containment check for {record.record_id} gave no answer: {e.detail}")
        return []
    if output.supported:
        return []
    return output.unsupported_claims or ["unspecified content outside the record"]


async def restructure_ground_truth(services: Services, record: BenchRecord) -> IdeaFragment:
    """The record's own idea in fragment form, using only what the record states."""
    if not record.problem_context.strip():
        raise ContractError(f"record {record.record_id} has an empty problem context")

    bindings = {
        "source_domain": record.source_domain_fine,
        "target_domain": record.target_domain_fine,
        **_material(record),
        "feedback": "",
        "fragment_format": fragment_format(),
    }

    async def generate() -> FragmentBody:
        output: FragmentOutput = await services.gateway.complete(
            ProfileName.GENERATOR, "restructure_ground_truth", bindings, "idea_fragment", validator=fragment_check()
        )
        return output.idea_fragment

    try:
        body = await generate()
        claims = await _unsupported_claims(services, record, body)
        if claims:
            logger.info(f"Ground truth for {record.record_id} adds {len(claims)} unsupported claims, regenerating once")
            listed = "\n".join(f"- {c}" for c in claims)
            bindings["feedback"] = f"\nA previous attempt added claims the material does not support; leave them out:\n{listed}\n"
            body = await generate()
    except StructuredOutputError as e:
        raise GroundTruthError(record.record_id, e.detail) from e

    source = lookup_coarse_domain(record.source_domain_fine)
    return IdeaFragment(
        **body.model_dump(),
        id=make_id("ground_truth", record.record_id, 0),
        source_domain=record.source_domain_fine,
        source_domain_name=source.value if source else record.source_domain_fine,
        provenance=Provenance.GROUND_TRUTH,
    )


async def ground_truth_for(services: Services, record: BenchRecord, store: GroundTruthDAO) -> IdeaFragment:
    cached = store.get_one_by_id(record.record_id)
    if cached is not None:
        return cached
    fragment = await restructure_ground_truth(services, record)
    return store.add(record.record_id, fragment)
