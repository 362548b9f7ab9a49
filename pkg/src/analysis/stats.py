from collections import Counter
from itertools import groupby
from typing import Dict, Iterable, List, Mapping, Tuple

import loguru
import numpy as np

from src.analysis.schemas import DistributionStats, FlowRow
from src.core.schemas import IdeaFragment, RunArtifact

logger = loguru.logger

ENTROPY_NOTE = "normalized entropy is computed after the min-count filter, log base 2"


def shannon_entropy(counts: Iterable[int], base: float = 2.0) -> float:
    """H = -sum(p log p) over the nonzero counts, in units of `base`."""
    values = np.asarray([c for c in counts if c > 0], dtype=float)
    if values.size == 0:
        return 0.0
    freqs = values / values.sum()
    return float(-(freqs * np.log(freqs)).sum() / np.log(base))


def normalized_entropy(counts: Mapping[str, int]) -> float:
    """H / log(number of nonzero fields); a single field (or none) is 0 by convention."""
    nonzero = [c for c in counts.values() if c > 0]
    if len(nonzero) < 2:
        return 0.0
    if len(set(nonzero)) == 1:
        return 1.0
    # the base cancels
    value = shannon_entropy(nonzero, base=np.e) / float(np.log(len(nonzero)))
    return min(1.0, max(0.0, value))


def top_fragments(run: RunArtifact, top_k: int) -> List[IdeaFragment]:
    return run.ranked_fragments()[:top_k]


def _ranked_runs(artifacts: Iterable[RunArtifact]) -> Tuple[List[RunArtifact], List[str]]:
    ranked, skipped = [], []
    for run in artifacts:
        if run.ranked_fragments():
            ranked.append(run)
        else:
            logger.warning(f"Run {run.run_id} has no ranked fragments, skipping")
            skipped.append(run.run_id)
    return ranked, sorted(skipped)


def domain_distribution(artifacts: Iterable[RunArtifact], top_k: int = 3, min_count: int = 10) -> DistributionStats:
    runs, skipped = _ranked_runs(artifacts)
    counts: Counter = Counter()
    for run in runs:
        counts.update(f.source_domain_name for f in top_fragments(run, top_k))

    kept = {field: n for field, n in sorted(counts.items()) if n >= min_count}
    dropped = {field: n for field, n in sorted(counts.items()) if n < min_count}
    return DistributionStats(
        counts=kept,
        normalized_entropy=normalized_entropy(kept),
        filtered_min_count=min_count,
        top_k=top_k,
        dropped=dropped,
        skipped_runs=skipped,
    )


def flow_table(
    artifacts: Iterable[RunArtifact],
    min_pair_count: int = 10,
    top_sources_per_target: int = 10,
    top_k: int = 3,
) -> List[FlowRow]:
    """(target subfield, source field, count) rows sorted by target, then count descending, then source."""
    runs, _ = _ranked_runs(artifacts)
    pairs: Dict[Tuple[str, str], int] = Counter()
    for run in runs:
        for fragment in top_fragments(run, top_k):
            pairs[(run.problem.target_domain_fine, fragment.source_domain_name)] += 1

    rows = sorted(
        (FlowRow(target=target, source=source, count=n) for (target, source), n in pairs.items() if n >= min_pair_count),
        key=lambda row: (row.target, -row.count, row.source),
    )
    table: List[FlowRow] = []
    for _, group in groupby(rows, key=lambda row: row.target):
        table.extend(list(group)[:top_sources_per_target])
    return table
