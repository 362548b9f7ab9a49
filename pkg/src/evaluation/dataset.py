import asyncio
from pathlib import Path
from typing import Iterable, List

import loguru
import orjson
from pydantic import ValidationError

from src.evaluation.exceptions import DatasetError
from src.evaluation.schemas import BenchRecord, FilterResult, LeakageFinding, LeakageScreenOutput, Rejection, RejectionTag
from src.llm.exceptions import StructuredOutputError
from src.llm.schemas import ProfileName
from src.pipeline.services import Services
from src.retrieval.domains import lookup_coarse_domain

logger = loguru.logger

INSPIRATION = "inspiration"


def load_records(path: Path) -> List[BenchRecord]:
    """Parse a JSON-lines benchmark file; blank lines are ignored."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(str(path), "no such file")
    records: List[BenchRecord] = []
    seen = set()
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = BenchRecord.model_validate(orjson.loads(line))
        except (orjson.JSONDecodeError, ValidationError) as e:
            raise DatasetError(str(path), f"line {number} is not a valid record: {e}")
        if record.record_id in seen:
            raise DatasetError(str(path), f"line {number} repeats record id {record.record_id}")
        seen.add(record.record_id)
        records.append(record)
    return records


def rejection_tags(record: BenchRecord) -> List[RejectionTag]:
    """Every eligibility criterion the record fails; empty means eligible."""
    tags: List[RejectionTag] = []
    target_fine, source_fine = record.target_domain_fine.strip(), record.source_domain_fine.strip()
    if not target_fine or not source_fine:
        tags.append(RejectionTag.MISSING_DOMAIN)
    else:
        target, source = lookup_coarse_domain(target_fine), lookup_coarse_domain(source_fine)
        if target is None or source is None:
            tags.append(RejectionTag.MAPPING_FAILURE)
        elif target is source:
            tags.append(RejectionTag.SAME_COARSE_FIELD)
    if record.relation.strip().casefold() != INSPIRATION:
        tags.append(RejectionTag.RELATION)
    if not record.leakage_checked:
        tags.append(RejectionTag.LEAKAGE_UNCHECKED)
    if record.arxiv_year is None:
        tags.append(RejectionTag.MISSING_YEAR)
    return tags


def filter_dataset(records: Iterable[BenchRecord]) -> FilterResult:
    eligible, rejected = [], []
    for record in records:
        tags = rejection_tags(record)
        if tags:
            rejected.append(Rejection(record_id=record.record_id, tags=tags))
        else:
            eligible.append(record)
    logger.info(f"{len(eligible)} eligible records, {len(rejected)} rejected")
    return FilterResult(eligible=eligible, rejected=rejected)


async def _screen(services: Services, record: BenchRecord) -> LeakageFinding:
    try:
        output: LeakageScreenOutput = await services.gateway.complete(
            ProfileName.JUDGE,
            "screen_leakage",
            {
                "source_domain": record.source_domain_fine or "another field",
                "problem_context": record.problem_context,
                "source_text": record.source_text,
            },
            "leakage_screen",
        )
    except StructuredOutputError as e:
        logger.warning(f"Leakage screen for {record.record_id} gave no answer: {e.detail}")
        return LeakageFinding(record_id=record.record_id)
    return LeakageFinding(record_id=record.record_id, leaks=output.leaks, rationale=output.rationale)


async def screen_leakage(services: Services, records: Iterable[BenchRecord]) -> List[LeakageFinding]:
    """Advisory judge opinion per record; `leakage_checked` is never changed."""
    findings = await asyncio.gather(*(_screen(services, r) for r in records))
    return sorted(findings, key=lambda f: f.record_id)
