from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional

from src.analysis.schemas import DistributionStats, FlowRow
from src.analysis.stats import ENTROPY_NOTE
from src.core.schemas import STAGE_PLANS, GateResult, IdeaFragment, Resolution, RunArtifact, Stage
from src.dao.storage import atomic_write, dumps_canonical
from src.evaluation.schemas import RateTable
from src.evaluation.winrate import format_rate_tables

REPORT_FILE = "report.md"
NO_FRAGMENTS = "## No interdisciplinary fragments"


def _json_block(payload) -> List[str]:
    return ["```json", dumps_canonical(payload).decode("utf-8").rstrip(), "```", ""]


def _evidence_line(snippet) -> str:
    mark = {True: "relevant", False: "not relevant", None: "unjudged"}[snippet.relevance]
    return f"- [paper:{snippet.paper_id}] {snippet.title} ({snippet.year or 'n.d.'}), {mark}"


def _questions(run: RunArtifact) -> List[str]:
    lines = ["## Research questions", ""]
    for q in run.questions:
        lines += [f"### {q.id}", f"- domain-specific: {q.domain_specific}", f"- domain-agnostic: {q.domain_agnostic}"]
        lines += [f"- query: {query}" for query in q.search_queries] + [""]
    return lines


def _coverage(run: RunArtifact) -> List[str]:
    lines = ["## Coverage", ""]
    for a in run.assessments:
        lines += [f"### {a.question_id}: {a.klass.value}", a.rationale, ""]
        lines += [_evidence_line(s) for s in a.evidence] + [""]
    return lines


def _challenges(run: RunArtifact) -> List[str]:
    lines = ["## Challenges", ""]
    for c in sorted(run.challenges, key=lambda c: (c.parent_question_id or "", c.priority_rank, c.id)):
        parent = c.parent_question_id or "model knowledge"
        lines += [f"### {c.id} (priority {c.priority_rank}, from {parent})", f"- domain-specific: {c.domain_specific}", f"- domain-agnostic: {c.domain_agnostic}", ""]
    return lines


def _target_context(run: RunArtifact) -> List[str]:
    return ["## Target context", ""] + [_evidence_line(s) for s in run.context_evidence] + [""]


def _source_domains(run: RunArtifact) -> List[str]:
    lines = ["## Source domains", ""]
    for d in run.source_domains:
        status = d.gate_result.value if d.prune_reason is None else f"{d.gate_result.value}: {d.prune_reason}"
        lines += [
            f"### {d.coarse_field.value} ({d.id}, challenge {d.challenge_id or 'none'})",
            f"- {d.relevant_count}/{d.retrieved_count} relevant, {status}",
            f"- rationale ({d.rationale_kind.value}): {d.rationale}",
            "",
        ]
    lines += ["### Takeaways", ""]
    for t in run.takeaways:
        cites = ", ".join(f"paper:{p}" for p in t.supporting_papers)
        lines += [f"- **{t.concept}** ({t.id}, domain {t.source_domain}): {t.mechanism} [{cites}]"]
    return lines + [""]


def _fragment_block(fragment: IdeaFragment) -> List[str]:
    rank = fragment.final_rank if fragment.final_rank is not None else "-"
    score = "" if fragment.copeland_score is None else f", Copeland {fragment.copeland_score}"
    return [f"### {rank}. {fragment.title}", f"Source field: {fragment.source_domain_name}{score}", ""] + _json_block(fragment.to_dict())


def _fragments(run: RunArtifact) -> List[str]:
    if not any(d.gate_result is GateResult.KEPT for d in run.source_domains) or not run.fragments:
        return [NO_FRAGMENTS, "", "No source domain passed the relevance gate with grounded takeaways.", ""]
    lines = ["## Idea fragments", ""]
    ordered = run.ranked_fragments() or sorted(run.fragments, key=lambda f: f.id)
    for fragment in ordered:
        lines += _fragment_block(fragment)
    return lines


def _ranking(run: RunArtifact) -> List[str]:
    lines = ["## Ranking", ""]
    if not run.judgments:
        lines += ["Ranked by the relevant fraction of each source domain; no pairwise judgments.", ""]
    else:
        ties = sum(1 for j in run.judgments if j.resolved is Resolution.TIE)
        lines += [f"{len(run.judgments)} pairwise judgments, {ties} ties.", ""]
    for f in run.ranked_fragments():
        lines.append(f"{f.final_rank}. {f.id} {f.source_domain_name}: {f.title}")
    return lines + [""]


SECTIONS: Dict[Stage, Callable[[RunArtifact], List[str]]] = {
    Stage.DECOMPOSITION: _questions,
    Stage.COVERAGE_ASSESSMENT: _coverage,
    Stage.CHALLENGE_EXTRACTION: _challenges,
    Stage.TARGET_RETRIEVAL: _target_context,
    Stage.SOURCE_EXPLORATION: _source_domains,
    Stage.INTEGRATION: _fragments,
    Stage.RANKING: _ranking,
}


def render_run_report(run: RunArtifact, top_k: int = 3) -> str:
    """Markdown report of a run, one section per completed stage in plan order."""
    problem = run.problem
    lines = [
        f"# Run {run.run_id}",
        "",
        f"Strategy: {run.strategy.value}",
        "",
        "## Problem",
        "",
        problem.statement,
        "",
        f"- target domain: {problem.target_domain_fine} ({problem.target_domain_coarse.value})",
        f"- cutoff year: {problem.cutoff_year if problem.cutoff_year is not None else 'none'}",
        "",
    ]
    for stage in STAGE_PLANS[run.strategy]:
        if stage in run.stage_checkpoints and stage in SECTIONS:
            lines += SECTIONS[stage](run)
    top = run.ranked_fragments()[:top_k]
    if top:
        lines += [f"## Top {top_k}", ""] + [f"{f.final_rank}. {f.title} ({f.source_domain_name})" for f in top] + [""]
    lines += ["## Checkpoints", ""]
    lines += [f"- {stage.value}: {run.stage_checkpoints[stage]}" for stage in STAGE_PLANS[run.strategy] if stage in run.stage_checkpoints]
    return "\n".join(lines).rstrip() + "\n"


def render_analysis_report(
    stats: Optional[DistributionStats] = None,
    flows: Optional[Iterable[FlowRow]] = None,
    tables: Optional[Iterable[RateTable]] = None,
) -> str:
    lines = ["# Analysis", ""]
    if stats is not None:
        lines += ["## Source-domain distribution", "", ENTROPY_NOTE, ""]
        lines += [f"- {field}: {count}" for field, count in stats.counts.items()] or ["- (no field reaches the minimum count)"]
        lines += ["", f"Normalized entropy: {stats.normalized_entropy:.4f}", ""] + _json_block(stats.to_dict())
    if flows is not None:
        rows = list(flows)
        lines += ["## Target to source flows", "", "| target | source | count |", "|---|---|---|"]
        lines += [f"| {r.target} | {r.source} | {r.count} |" for r in rows]
        lines += [""] + _json_block([r.to_dict() for r in rows])
    if tables is not None:
        tables = list(tables)
        lines += ["## Win rates", "", "```", format_rate_tables(tables).rstrip(), "```", ""]
        lines += _json_block([t.to_dict() for t in tables])
    return "\n".join(lines).rstrip() + "\n"


def emit_report(text: str, out_dir: Path, name: str = REPORT_FILE) -> Path:
    path = Path(out_dir) / name
    atomic_write(path, text.encode("utf-8"))
    return path
