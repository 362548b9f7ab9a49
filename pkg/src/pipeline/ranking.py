import asyncio
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

import loguru

from src.core.exceptions import ContractError
from src.core.schemas import (
    IdeaFragment,
    PairwiseJudgment,
    ResearchProblem,
    Resolution,
    RunArtifact,
    SourceDomain,
    Strategy,
    Verdict,
    resolve_verdicts,
)
from src.llm.exceptions import StructuredOutputError
from src.llm.schemas import ProfileName
from src.pipeline.formatting import format_fragment
from src.pipeline.schemas import ComparisonOutput
from src.pipeline.services import Services

logger = loguru.logger

Pair = FrozenSet[str]


def copeland_scores(ids: Iterable[str], judgments: Iterable[PairwiseJudgment]) -> Dict[str, int]:
    """wins - losses per id; every unordered pair must be judged exactly once."""
    ids = list(ids)
    scores = {i: 0 for i in ids}
    seen: Dict[Pair, PairwiseJudgment] = {}
    for judgment in judgments:
        pair = frozenset((judgment.fragment_a, judgment.fragment_b))
        if not pair.issubset(scores):
            continue
        if pair in seen:
            raise ContractError(f"pair ({judgment.fragment_a}, {judgment.fragment_b}) judged more than once")
        seen[pair] = judgment
        if judgment.resolved is Resolution.A_WINS:
            scores[judgment.fragment_a] += 1
            scores[judgment.fragment_b] -= 1
        elif judgment.resolved is Resolution.B_WINS:
            scores[judgment.fragment_b] += 1
            scores[judgment.fragment_a] -= 1
    for a, b in combinations(sorted(ids), 2):
        if frozenset((a, b)) not in seen:
            raise ContractError(f"no judgment for pair ({a}, {b})")
    return scores


def copeland_order(ids: Iterable[str], judgments: Iterable[PairwiseJudgment]) -> List[Tuple[str, int]]:
    """(id, score) best first; equal scores go by ascending id."""
    scores = copeland_scores(ids, judgments)
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


def rank_fragments(fragments: List[IdeaFragment], judgments: Iterable[PairwiseJudgment]) -> List[IdeaFragment]:
    by_id = {f.id: f for f in fragments}
    order = copeland_order(by_id, judgments)
    return [
        by_id[fragment_id].model_copy(update={"copeland_score": score, "final_rank": rank})
        for rank, (fragment_id, score) in enumerate(order, start=1)
    ]


def proportion_rank(fragments: List[IdeaFragment], domains: Mapping[str, SourceDomain]) -> List[IdeaFragment]:
    """Order by the relevant fraction of each fragment's source domain, ties by id."""

    def fraction(fragment: IdeaFragment) -> float:
        domain = domains.get(fragment.source_domain)
        if domain is None:
            raise ContractError(f"fragment {fragment.id} references unknown source domain {fragment.source_domain}")
        return domain.relevant_fraction

    ordered = sorted(fragments, key=lambda f: (-fraction(f), f.id))
    return [f.model_copy(update={"copeland_score": None, "final_rank": rank}) for rank, f in enumerate(ordered, start=1)]


async def _preference(
    services: Services,
    first: IdeaFragment,
    second: IdeaFragment,
    problem: ResearchProblem,
) -> Tuple[Optional[str], str]:
    """Id of the fragment the judge prefers with `first` shown as A, or None when it never answers."""
    try:
        output: ComparisonOutput = await services.gateway.complete(
            ProfileName.JUDGE,
            "compare_fragments",
            {
                "problem": problem.statement,
                "target_domain": problem.target_domain_fine,
                "fragment_a": format_fragment(first),
                "fragment_b": format_fragment(second),
            },
            "comparison",
        )
    except StructuredOutputError as e:
        logger.warning(f"No verdict for ({first.id}, {second.id}): {e.detail}")
        return None, ""
    return (first.id if output.preferred == "A" else second.id), output.rationale


async def compare_fragments(
    services: Services,
    a: IdeaFragment,
    b: IdeaFragment,
    problem: ResearchProblem,
) -> PairwiseJudgment:
    """Judge both presentation orders; only agreement produces a winner."""
    if a.id == b.id:
        raise ContractError(f"fragment {a.id} cannot be compared with itself")
    (winner_ab, why_ab), (winner_ba, why_ba) = await asyncio.gather(
        _preference(services, a, b, problem),
        _preference(services, b, a, problem),
    )

    def verdict(winner: Optional[str]) -> Optional[Verdict]:
        if winner is None:
            return None
        return Verdict.A if winner == a.id else Verdict.B

    verdict_ab, verdict_ba = verdict(winner_ab), verdict(winner_ba)
    return PairwiseJudgment(
        fragment_a=a.id,
        fragment_b=b.id,
        verdict_ab=verdict_ab,
        verdict_ba=verdict_ba,
        resolved=resolve_verdicts(verdict_ab, verdict_ba),
        rationale=f"a first: {why_ab or 'no verdict'} | b first: {why_ba or 'no verdict'}",
    )


async def judge_all_pairs(
    services: Services,
    fragments: List[IdeaFragment],
    problem: ResearchProblem,
    known: Iterable[PairwiseJudgment] = (),
) -> List[PairwiseJudgment]:
    """One judgment per unordered pair, a = the smaller id; already judged pairs are reused."""
    cache: Dict[Pair, PairwiseJudgment] = {frozenset((j.fragment_a, j.fragment_b)): j for j in known}
    by_id = {f.id: f for f in fragments}
    pairs = list(combinations(sorted(by_id), 2))
    missing = [(a, b) for a, b in pairs if frozenset((a, b)) not in cache]
    judged = await asyncio.gather(*(compare_fragments(services, by_id[a], by_id[b], problem) for a, b in missing))
    for judgment in judged:
        cache[frozenset((judgment.fragment_a, judgment.fragment_b))] = judgment
    return [cache[frozenset(pair)] for pair in pairs]


async def run_ranking(services: Services, run: RunArtifact) -> RunArtifact:
    if run.strategy is Strategy.NO_POTENTIAL_RANKING:
        ranked = proportion_rank(run.fragments, {d.id: d for d in run.source_domains})
        return run.model_copy(update={"fragments": ranked, "judgments": []})

    judgments = await judge_all_pairs(services, run.fragments, run.problem, run.judgments)
    ties = sum(1 for j in judgments if j.resolved is Resolution.TIE)
    logger.info(f"Run {run.run_id}: {len(judgments)} pairwise judgments, {ties} ties")
    return run.model_copy(update={"fragments": rank_fragments(run.fragments, judgments), "judgments": judgments})
