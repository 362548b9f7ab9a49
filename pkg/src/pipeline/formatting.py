from typing import Iterable

import orjson

from src.core.schemas import FragmentBody, IdeaFragment, PaperSnippet, Takeaway

NO_EVIDENCE = "(no papers retrieved)"


def format_evidence(snippets: Iterable[PaperSnippet]) -> str:
    blocks = []
    for snippet in snippets:
        year = snippet.year if snippet.year is not None else "n.d."
        blocks.append(f"[paper:{snippet.paper_id}] {snippet.title} ({year})\n{snippet.snippet_text}")
    return "\n\n".join(blocks) or NO_EVIDENCE


def format_takeaways(takeaways: Iterable[Takeaway]) -> str:
    lines = []
    for takeaway in takeaways:
        papers = ", ".join(f"paper:{p}" for p in takeaway.supporting_papers)
        lines.append(f"[takeaway:{takeaway.id}] {takeaway.concept}\n  How it works: {takeaway.mechanism}\n  Grounded in: {papers}")
    return "\n\n".join(lines)


def format_fragment(fragment: FragmentBody) -> str:
    body = fragment.body() if isinstance(fragment, IdeaFragment) else fragment
    document = {"idea_fragment": body.model_dump(mode="json")}
    if isinstance(fragment, IdeaFragment):
        document["source_domain"] = fragment.source_domain_name
    return orjson.dumps(document, option=orjson.OPT_INDENT_2).decode("utf-8")
