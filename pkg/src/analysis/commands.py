from pathlib import Path
from typing import List, Optional

import click
import loguru

from src.analysis.report import emit_report, render_analysis_report
from src.analysis.stats import domain_distribution, flow_table
from src.core.exceptions import ArtifactCorruptedError
from src.core.schemas import RunArtifact
from src.core.serialization import ARTIFACT_FILE, load_artifact
from src.dao.storage import atomic_write, dumps_canonical, read_json
from src.evaluation.harness import RATES_JSON
from src.evaluation.schemas import RateTable

logger = loguru.logger

STATS_FILE = "stats.json"
FLOWS_FILE = "flows.json"
ANALYSIS_REPORT = "analysis.md"


def collect_artifacts(root: Path) -> List[RunArtifact]:
    """Every readable artifact below `root`, ordered by path; corrupted ones are skipped."""
    artifacts = []
    for path in sorted(Path(root).rglob(ARTIFACT_FILE)):
        try:
            artifacts.append(load_artifact(path))
        except ArtifactCorruptedError as e:
            logger.warning(f"Skipping {path}: {e.detail}")
    return artifacts


def collect_rate_tables(root: Path) -> List[RateTable]:
    tables = []
    for path in sorted(Path(root).rglob(RATES_JSON)):
        tables.extend(RateTable.model_validate(t) for t in read_json(path))
    return tables


@click.command("analyze")
@click.option("--runs", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True, help="Directory searched for run artifacts.")
@click.option("--top-k", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--min-count", type=click.IntRange(min=0), default=10, show_default=True, help="Drop fields with fewer occurrences before entropy.")
@click.option("--min-pair-count", type=click.IntRange(min=0), default=10, show_default=True)
@click.option("--top-sources", type=click.IntRange(min=1), default=10, show_default=True, help="Sources kept per target subfield.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Defaults to --runs.")
def analyze(
    runs: Path,
    top_k: int,
    min_count: int,
    min_pair_count: int,
    top_sources: int,
    out: Optional[Path],
) -> None:
    """Source-domain distribution, entropy and target-source flows over finished runs."""
    out = out or runs
    artifacts = collect_artifacts(runs)
    stats = domain_distribution(artifacts, top_k=top_k, min_count=min_count)
    flows = flow_table(artifacts, min_pair_count=min_pair_count, top_sources_per_target=top_sources, top_k=top_k)
    tables = collect_rate_tables(runs)

    atomic_write(out / STATS_FILE, dumps_canonical(stats.to_dict()))
    atomic_write(out / FLOWS_FILE, dumps_canonical([row.to_dict() for row in flows]))
    emit_report(render_analysis_report(stats, flows, tables or None), out, ANALYSIS_REPORT)
    click.echo(f"{len(artifacts)} runs analyzed, normalized entropy {stats.normalized_entropy:.4f}, written to {out}")
