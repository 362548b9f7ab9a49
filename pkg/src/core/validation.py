from typing import Any, Iterable, List, Mapping, Optional, Set

from pydantic import BaseModel, ValidationError

from src.core.exceptions import IntegrityError
from src.core.schemas import (
    MAX_TITLE_WORDS,
    STAGE_PLANS,
    CoverageClass,
    FragmentBody,
    IdeaFragment,
    PaperSnippet,
    Provenance,
    RunArtifact,
    Strategy,
)


class Violation(BaseModel):
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}" if self.path else self.message


def _loc(loc: Iterable[Any]) -> str:
    return ".".join(str(part) for part in loc)


def _from_validation_error(error: ValidationError) -> List[Violation]:
    violations = []
    for item in error.errors():
        path = _loc(item["loc"])
        if item["type"] == "missing":
            message = "missing field"
        elif item["type"] == "extra_forbidden":
            message = "unexpected field"
        else:
            message = item["msg"]
        violations.append(Violation(path=path, message=message))
    return violations


def _body_of(fragment: Any) -> tuple[Optional[FragmentBody], List[Violation]]:
    if isinstance(fragment, FragmentBody):
        return fragment, []
    if not isinstance(fragment, Mapping):
        return None, [Violation(path="", message=f"expected an idea fragment object, got {type(fragment).__name__}")]
    document = fragment.get("idea_fragment", fragment) if len(fragment) == 1 else fragment
    if not isinstance(document, Mapping):
        return None, [Violation(path="idea_fragment", message="expected an object")]
    app_fields = {k: v for k, v in document.items() if k not in IdeaFragment.model_fields or k in FragmentBody.model_fields}
    try:
        return FragmentBody.model_validate(app_fields), []
    except ValidationError as e:
        return None, _from_validation_error(e)


def _blank(value: str) -> bool:
    return not value or not value.strip()


def validate_fragment(
    fragment: IdeaFragment | FragmentBody | Mapping,
    run: Optional[RunArtifact] = None,
    allowed_takeaways: Optional[Set[str]] = None,
) -> List[Violation]:
    """Every schema violation of a fragment; an empty list means valid. Never raises."""
    try:
        body, violations = _body_of(fragment)
        if body is None:
            return violations

        if len(body.title.split()) > MAX_TITLE_WORDS:
            violations.append(Violation(path="title", message=f"title exceeds {MAX_TITLE_WORDS} words"))
        prose = {
            "title": body.title,
            "core_insight": body.core_insight,
            "integration_mechanism.synthesis_approach": body.integration_mechanism.synthesis_approach,
            "challenge_resolution.addresses_target_challenge": body.challenge_resolution.addresses_target_challenge,
            "challenge_resolution.addresses_source_limitations": body.challenge_resolution.addresses_source_limitations,
            "challenge_resolution.addresses_research_problem": body.challenge_resolution.addresses_research_problem,
            "concrete_realization.proposed_approach": body.concrete_realization.proposed_approach,
        }
        for path, value in prose.items():
            if _blank(value):
                violations.append(Violation(path=path, message="must be non-empty"))
        if not body.concrete_realization.key_innovations or any(_blank(k) for k in body.concrete_realization.key_innovations):
            violations.append(Violation(path="concrete_realization.key_innovations", message="must list at least one non-empty innovation"))
        if not body.integration_mechanism.selected_takeaways:
            violations.append(Violation(path="integration_mechanism.selected_takeaways", message="must select at least one takeaway"))

        ground_truth = isinstance(fragment, IdeaFragment) and fragment.provenance is Provenance.GROUND_TRUTH
        if not ground_truth:
            known = {t.id for t in run.takeaways} if run is not None else None
            for index, selected in enumerate(body.integration_mechanism.selected_takeaways):
                path = f"integration_mechanism.selected_takeaways.{index}.takeaway_id"
                if known is not None and selected.takeaway_id not in known:
                    violations.append(Violation(path=path, message=f"dangling takeaway reference {selected.takeaway_id}"))
                elif allowed_takeaways is not None and selected.takeaway_id not in allowed_takeaways:
                    violations.append(Violation(path=path, message=f"takeaway {selected.takeaway_id} was not offered for this fragment"))
        return violations
    except Exception as e:  # total by contract
        return [Violation(path="", message=f"validation aborted: {e}")]


def _duplicates(ids: Iterable[str]) -> List[str]:
    seen, dupes = set(), []
    for ident in ids:
        if ident in seen:
            dupes.append(ident)
        seen.add(ident)
    return dupes


def _all_snippets(run: RunArtifact) -> Iterable[tuple[str, PaperSnippet]]:
    for assessment in run.assessments:
        for snippet in assessment.evidence:
            yield f"assessment {assessment.question_id}", snippet
    for snippet in run.context_evidence:
        yield "context_evidence", snippet
    for domain in run.source_domains:
        for snippet in domain.evidence:
            yield f"source domain {domain.id}", snippet


def integrity_violations(run: RunArtifact) -> List[str]:
    """Human-readable list of every broken reference or cross-record invariant."""
    problems: List[str] = []

    for name, items in (
        ("question", run.questions),
        ("challenge", run.challenges),
        ("source domain", run.source_domains),
        ("takeaway", run.takeaways),
        ("fragment", run.fragments),
    ):
        for dupe in _duplicates(item.id for item in items):
            problems.append(f"duplicate {name} id {dupe}")

    question_ids = {q.id for q in run.questions}
    assessed = [a.question_id for a in run.assessments]
    for question_id in assessed:
        if question_id not in question_ids:
            problems.append(f"assessment references unknown question {question_id}")
    for dupe in _duplicates(assessed):
        problems.append(f"question {dupe} assessed more than once")

    for challenge in run.challenges:
        if challenge.parent_question_id is None:
            continue
        if challenge.parent_question_id not in question_ids:
            problems.append(f"challenge {challenge.id} references unknown question {challenge.parent_question_id}")
            continue
        assessment = run.assessment_for(challenge.parent_question_id)
        if assessment is None or assessment.klass is CoverageClass.RESOLVED:
            problems.append(f"challenge {challenge.id} has a resolved or unassessed parent {challenge.parent_question_id}")

    challenge_ids = {c.id for c in run.challenges}
    target = run.problem.target_domain_coarse
    for domain in run.source_domains:
        if domain.challenge_id is not None and domain.challenge_id not in challenge_ids:
            problems.append(f"source domain {domain.id} references unknown challenge {domain.challenge_id}")
        if run.strategy is not Strategy.FREE_FORM_SOURCE and domain.coarse_field is target:
            problems.append(f"source domain {domain.id} equals the target field {target.value}")

    for takeaway in run.takeaways:
        domain = run.domain(takeaway.source_domain)
        if domain is None:
            problems.append(f"takeaway {takeaway.id} references unknown source domain {takeaway.source_domain}")
            continue
        relevant = {s.paper_id for s in domain.relevant_evidence}
        for paper_id in takeaway.supporting_papers:
            if paper_id not in relevant:
                problems.append(f"takeaway {takeaway.id} cites paper {paper_id} outside its domain's relevant evidence")
        if takeaway.challenge_id is not None and takeaway.challenge_id not in challenge_ids:
            problems.append(f"takeaway {takeaway.id} references unknown challenge {takeaway.challenge_id}")

    takeaway_ids = {t.id for t in run.takeaways}
    fragment_ids = {f.id for f in run.fragments}
    for fragment in run.fragments:
        if run.domain(fragment.source_domain) is None:
            problems.append(f"fragment {fragment.id} references unknown source domain {fragment.source_domain}")
        if fragment.challenge_id is not None and fragment.challenge_id not in challenge_ids:
            problems.append(f"fragment {fragment.id} references unknown challenge {fragment.challenge_id}")
        for takeaway_id in fragment.takeaway_ids:
            if takeaway_id not in takeaway_ids:
                problems.append(f"fragment {fragment.id} references unknown takeaway {takeaway_id}")

    for judgment in run.judgments:
        for fragment_id in (judgment.fragment_a, judgment.fragment_b):
            if fragment_id not in fragment_ids:
                problems.append(f"judgment references unknown fragment {fragment_id}")

    cutoff = run.problem.cutoff_year
    if cutoff is not None:
        for where, snippet in _all_snippets(run):
            if snippet.year is None or snippet.year >= cutoff:
                problems.append(f"{where} holds paper {snippet.paper_id} from {snippet.year}, not before {cutoff}")

    plan = STAGE_PLANS[run.strategy]
    done = [stage for stage in plan if stage in run.stage_checkpoints]
    if any(stage not in plan for stage in run.stage_checkpoints):
        problems.append(f"checkpoint for a stage outside the {run.strategy.value} plan")
    if done != plan[: len(done)]:
        problems.append("checkpointed stages skip an earlier stage of the plan")

    return problems


def check_integrity(run: RunArtifact) -> None:
    """Raise IntegrityError naming the first violating reference."""
    problems = integrity_violations(run)
    if problems:
        raise IntegrityError(f"run {run.run_id} failed integrity check: {problems[0]}", reference=problems[0])
