"""In-process stand-ins for the snippet service and the chat endpoint.

Both are plain request handlers wrapped in `httpx.MockTransport`, so the real
clients, retry loops and fixture recording run unchanged against them.
"""

import hashlib
import re
from typing import Any, Callable, Dict, List, Optional, Sequence

import httpx
import orjson

from src.llm.gateway import SCHEMA_HEADER

PAPER_LINE = re.compile(r"^\[paper:([^\]]+)\] (.+?) \((?:\d+|n\.d\.)\)$", re.MULTILINE)
TAKEAWAY_LINE = re.compile(r"^\[takeaway:([^\]]+)\]", re.MULTILINE)
TAKEAWAY_FIELD = re.compile(r'"takeaway_id": "([^"]+)"')
TITLE_FIELD = re.compile(r'"title": "([^"]*)"')
UNRELATED = "Unrelated"
POST_CUTOFF_YEAR = 2031

Answer = Callable[[str], Any]


def _digest(*parts: str) -> str:
    return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()[:6]


class FakeScholar:
    """Snippet search and paper batch over a deterministic synthetic corpus.

    Every (field, query) pair yields five papers: three relevant ones (the second
    has a snippet identical to its title, so only its abstract is usable), one
    whose title marks it unrelated, and one unrelated paper published after any
    test cutoff. Fields in `weak_fields` get a second unrelated paper, which
    leaves exactly half of their papers relevant.
    """

    def __init__(self, weak_fields: Sequence[str] = ("Economics",), failures: int = 0, status: int = 503):
        self.weak_fields = set(weak_fields)
        self.failures = failures
        self.status = status
        self.requests: List[httpx.Request] = []
        self._papers: Dict[str, Dict[str, Any]] = {}

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handle)

    @property
    def searches(self) -> int:
        return sum(1 for r in self.requests if r.url.path.endswith("/snippet/search"))

    def corpus(self, field: str, query: str) -> List[Dict[str, Any]]:
        key = _digest(field, query)
        papers = []
        for index in range(5):
            unrelated = index >= 3 or (index == 2 and field in self.weak_fields)
            title = f"{UNRELATED} note {key}-{index}" if unrelated else f"{field} study of {query} ({index})"
            papers.append(
                {
                    "paperId": f"p{key}{index}",
                    "title": title,
                    "year": POST_CUTOFF_YEAR if index == 4 else 2015 + index,
                    "snippet": title if index == 1 else f"Findings on {query} within {field}, part {index}.",
                    "abstract": f"We examine {query} through the lens of {field}, paper {index}.",
                    "score": round(1.0 - index * 0.1, 2),
                }
            )
        return papers

    def handle(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        if self.failures > 0:
            self.failures -= 1
            return httpx.Response(self.status, headers={"retry-after": "0"})
        if request.url.path.endswith("/snippet/search"):
            return httpx.Response(200, json=self.search(request.url.params.get("query"), request.url.params.get("fieldsOfStudy")))
        if request.url.path.endswith("/paper/batch"):
            ids = orjson.loads(request.content)["ids"]
            return httpx.Response(200, json=[self._details(i) for i in ids])
        return httpx.Response(404)

    def search(self, query: str, field: str) -> Dict[str, Any]:
        hits = []
        for paper in self.corpus(field, query):
            self._papers[paper["paperId"]] = paper
            hits.append(
                {
                    "score": paper["score"],
                    "paper": {"paperId": paper["paperId"], "title": paper["title"]},
                    "snippet": {"text": paper["snippet"]},
                }
            )
        return {"data": hits}

    def _details(self, paper_id: str) -> Optional[Dict[str, Any]]:
        paper = self._papers.get(paper_id)
        if paper is None:
            return None
        return {"paperId": paper_id, "title": paper["title"], "year": paper["year"], "abstract": paper["abstract"]}


def evidence(prompt: str) -> List[tuple[str, str]]:
    return [(paper_id, title) for paper_id, title in PAPER_LINE.findall(prompt) if paper_id != "ID"]


def _flags(prompt: str) -> List[Dict[str, Any]]:
    return [{"paper_id": paper_id, "relevant": UNRELATED not in title} for paper_id, title in evidence(prompt)]


def _section(prompt: str, header: str, end: str) -> str:
    start = prompt.index(header) + len(header)
    return prompt[start : prompt.index(end, start)].strip()


QUESTIONS = [
    {
        "domain_specific": "How can language models keep confidence calibration under distribution shift?",
        "domain_agnostic": "How can a predictor keep its stated certainty honest when conditions change?",
        "search_queries": ["confidence calibration distribution shift"],
    },
    {
        "domain_specific": "How can transformers reason over long documents without losing earlier context?",
        "domain_agnostic": "How can a sequential reasoner retain early information over long inputs?",
        "search_queries": ["long document reasoning memory"],
    },
    {
        "domain_specific": "How can dialogue agents adapt their strategy to users they have never seen?",
        "domain_agnostic": "How can an agent change its approach for a newcomer it knows nothing about?",
        "search_queries": ["dialogue strategy adaptation new users"],
    },
]

PROPOSALS = [
    ("Biology", "shared_mechanism", "memory consolidation during sleep"),
    ("Physics", "analogy", "renormalization coarse graining"),
    ("Economics", "transferable_principle", "attention economy scarcity"),
    ("Alchemy", "analogy", "transmutation"),
    ("Computer Science", "analogy", "hierarchical caching"),
]


class FakeChat:
    """Chat-completions endpoint answering by the `X-Output-Schema` header.

    `overrides` replaces the answer for one schema; an answer may be a JSON-able
    object or a raw string, which is returned untouched.
    """

    def __init__(self, overrides: Optional[Dict[str, Answer]] = None, failures: int = 0):
        self.overrides = dict(overrides or {})
        self.failures = failures
        self.calls: List[str] = []
        self.prompts: List[str] = []

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handle)

    def count(self, schema: str) -> int:
        return self.calls.count(schema)

    def handle(self, request: httpx.Request) -> httpx.Response:
        if self.failures > 0:
            self.failures -= 1
            return httpx.Response(503)
        schema = request.headers[SCHEMA_HEADER]
        prompt = orjson.loads(request.content)["messages"][0]["content"]
        self.calls.append(schema)
        self.prompts.append(prompt)
        answer = self.overrides.get(schema) or getattr(self, f"answer_{schema}")
        content = answer(prompt)
        if not isinstance(content, str):
            content = orjson.dumps(content).decode("utf-8")
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})

    def answer_decomposition(self, prompt: str) -> Any:
        return {"questions": QUESTIONS}

    def answer_coverage(self, prompt: str) -> Any:
        flags = _flags(prompt)
        relevant = [f["paper_id"] for f in flags if f["relevant"]]
        if "calibration" in prompt:
            klass = "resolved"
        elif "long documents" in prompt:
            klass = "partial"
        else:
            klass = "open"
        cited = f" See [paper:{relevant[0]}]." if relevant else ""
        return {"relevance": flags, "klass": klass, "rationale": f"Assessed as {klass}.{cited}"}

    def answer_challenges(self, prompt: str) -> Any:
        return {
            "challenges": [
                {
                    "domain_specific": "Attention dilution across long transformer contexts",
                    "domain_agnostic": "Keeping focus on what matters as the input grows",
                },
                {
                    "domain_specific": "Positional drift in long-range token dependencies",
                    "domain_agnostic": "Losing track of order over very long sequences",
                },
            ]
        }

    def answer_domain_proposal(self, prompt: str) -> Any:
        return {
            "domains": [
                {"field": field, "rationale_kind": kind, "rationale": f"{field} studies a similar problem.", "search_queries": [query]}
                for field, kind, query in PROPOSALS
            ]
        }

    def answer_target_queries(self, prompt: str) -> Any:
        return {"search_queries": ["long context language modeling"]}

    def answer_relevance(self, prompt: str) -> Any:
        return {"relevance": _flags(prompt)}

    def answer_takeaways(self, prompt: str) -> Any:
        field = re.search(r"^RELEVANT (.+) PAPERS$", prompt, re.MULTILINE).group(1)
        papers = evidence(prompt)
        return {
            "takeaways": [
                {
                    "concept": f"{field} principle {index + 1}: {title}",
                    "mechanism": f"Transfers how {field.lower()} handles the challenge.",
                    "supporting_paper_ids": [paper_id],
                }
                for index, (paper_id, title) in enumerate(papers[:2])
            ]
        }

    def answer_idea_fragment(self, prompt: str) -> Any:
        ids = TAKEAWAY_LINE.findall(prompt) or [t for t in TAKEAWAY_FIELD.findall(prompt) if t != "t1"] or ["t1"]
        field = re.search(r"^(.+) TAKEAWAYS$", prompt, re.MULTILINE)
        source = field.group(1) if field else "Source"
        prefix = "Clarified" if "Rewrite the idea fragment" in prompt else "Integrated"
        return {
            "idea_fragment": {
                "title": f"{prefix} {source} view {_digest(prompt)}",
                "core_insight": f"{source} concepts reframe the challenge.",
                "integration_mechanism": {
                    "target_domain_elements": ["transformer attention", "retrieval memory"],
                    "selected_takeaways": [
                        {
                            "takeaway_id": takeaway_id,
                            "source_domain_formulation": f"{source} formulation of {takeaway_id}",
                            "mechanism_explanation": "Explains the shared logic.",
                            "selection_rationale": "Directly bears on the challenge.",
                        }
                        for takeaway_id in ids
                    ],
                    "synthesis_approach": "Combine both views in one architecture.",
                },
                "challenge_resolution": {
                    "addresses_target_challenge": "Keeps the model focused.",
                    "addresses_source_limitations": "Grounds the analogy in measurable signals.",
                    "addresses_research_problem": "Moves the problem forward.",
                },
                "concrete_realization": {
                    "proposed_approach": f"A {source.lower()}-inspired memory module.",
                    "key_innovations": ["Adaptive consolidation", "Cross-scale summaries"],
                },
            }
        }

    def answer_comparison(self, prompt: str) -> Any:
        first, second = TITLE_FIELD.findall(prompt)[:2]
        return {"preferred": "A" if first < second else "B", "rationale": "Deeper integration."}

    def answer_domain_classification(self, prompt: str) -> Any:
        return {"field": "Computer Science", "rationale": "It is a computing subfield."}

    def _judgment(self, key: str, criteria: Sequence[str]) -> Any:
        return {
            key: {c: {"preferred_method": 1, "reasoning": "Method 1 is stronger."} for c in criteria},
            "overall_assessment": {"preferred_method": 1, "summary": "Method 1 overall."},
        }

    def answer_takeaway_judgment(self, prompt: str) -> Any:
        return self._judgment("takeaway_comparison", ["interdisciplinary_insightfulness", "interdisciplinary_relevance"])

    def answer_idea_judgment(self, prompt: str) -> Any:
        return self._judgment("idea_comparison", ["interdisciplinary_novelty", "interdisciplinary_usefulness"])

    def answer_containment(self, prompt: str) -> Any:
        return {"supported": True, "unsupported_claims": []}

    def answer_leakage_screen(self, prompt: str) -> Any:
        context = _section(prompt, "PROBLEM CONTEXT\n", "\n\nSOURCE INSIGHT")
        source = _section(prompt, "SOURCE INSIGHT\n", "\n\nDoes the problem context")
        leaks = source.casefold() in context.casefold()
        return {"leaks": leaks, "rationale": "The context states the insight." if leaks else "The insight is not stated."}
