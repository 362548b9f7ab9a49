from collections import defaultdict
from typing import Dict, Iterable, List

import numpy as np

from src.evaluation.schemas import LEVEL_CRITERIA, Criterion, JudgeOutcome, Level, RateTable, Side

WINRATE_RULE = "win rate@k: mean over a record's top-k outputs, then mean over records, x100, 2 decimals"


def winrate_at_k(outcomes: Iterable[JudgeOutcome], k: int, level: Level, arm: str = "") -> RateTable:
    """Percentage of valid verdicts preferring the method, per criterion.

    Each record first averages its own outputs ranked 1..k, then records are averaged.
    Records judged on fewer than k outputs average over what exists and are listed as short.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    by_record: Dict[str, List[JudgeOutcome]] = defaultdict(list)
    for outcome in outcomes:
        if outcome.level is level and outcome.output_rank <= k:
            by_record[outcome.record_id].append(outcome)

    fractions: Dict[Criterion, List[float]] = defaultdict(list)
    comparisons: Dict[Criterion, int] = defaultdict(int)
    excluded, short = 0, []
    for record_id in sorted(by_record):
        judged = by_record[record_id]
        if len({o.output_rank for o in judged}) < k:
            short.append(record_id)
        excluded += sum(1 for o in judged if not o.valid)
        for criterion in LEVEL_CRITERIA[level]:
            wins = [v.preferred is Side.METHOD for o in judged if o.valid for v in o.verdicts if v.criterion is criterion]
            if wins:
                fractions[criterion].append(float(np.mean(wins)))
                comparisons[criterion] += len(wins)

    rates = {c: round(100 * float(np.mean(fractions[c])), 2) for c in LEVEL_CRITERIA[level] if fractions[c]}
    return RateTable(
        arm=arm,
        level=level,
        k=k,
        rates=rates,
        comparisons=dict(comparisons),
        records=len(by_record),
        excluded=excluded,
        short_records=short,
        rule=WINRATE_RULE,
    )


def format_rate_tables(tables: Iterable[RateTable]) -> str:
    """Aligned-column text, one row per (arm, level, k)."""
    tables = list(tables)
    header = ["arm", "level", "k", "criterion", "rate", "n", "records", "excluded"]
    rows = [
        [t.arm, t.level.value, str(t.k), c.value, f"{t.rates[c]:.2f}", str(t.comparisons.get(c, 0)), str(t.records), str(t.excluded)]
        for t in tables
        for c in LEVEL_CRITERIA[t.level]
        if c in t.rates
    ]
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = [f"# {WINRATE_RULE}"]
    lines += ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header, *rows]]
    return "\n".join(lines) + "\n"
