from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import httpx
import loguru
from tenacity import AsyncRetrying, RetryCallState, retry_if_exception_type, stop_after_attempt, wait_exponential

from src.core.schemas import PaperSnippet, SourceKind
from src.dao.fixtures import FixtureDAO
from src.retrieval.dao import CacheDAO
from src.retrieval.exceptions import RetrievalError
from src.retrieval.rate_limit import TokenBucket
from src.retrieval.schemas import CacheEntry, RetrievalRequest
from src.settings import Mode, S2Settings

logger = loguru.logger

BACK_PRESSURE_STATUSES = {429, 500, 502, 503, 504}
SNIPPET_SEPARATOR = "\n\n"
MAX_SNIPPET_LIMIT = 1000


class BackPressure(Exception):
    def __init__(self, response: httpx.Response):
        super().__init__(f"{response.request.method} {response.request.url.path} returned {response.status_code}")
        self.status_code = response.status_code
        self.retry_after = _retry_after(response)


def _retry_after(response: httpx.Response) -> Optional[float]:
    value = response.headers.get("retry-after")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


def _same_text(a: str, b: str) -> bool:
    return " ".join(a.split()).casefold() == " ".join(b.split()).casefold()


def post_process(request: RetrievalRequest, responses: Dict[str, Any]) -> List[PaperSnippet]:
    """Raw search + batch payloads to at most `limit` cutoff-respecting PaperSnippets."""
    hits = responses.get("snippets", {}).get("data") or []
    details = responses.get("details") or []

    order: List[str] = []
    papers: Dict[str, Dict[str, Any]] = {}
    for position, hit in enumerate(hits):
        paper = hit.get("paper") or {}
        paper_id = str(paper.get("corpusId") or paper.get("paperId") or "")
        if not paper_id:
            continue
        entry = papers.get(paper_id)
        if entry is None:
            entry = papers[paper_id] = {
                "title": paper.get("title") or "",
                "year": paper.get("year"),
                "texts": [],
                "score": hit.get("score"),
                "position": position,
            }
            order.append(paper_id)
        text = ((hit.get("snippet") or {}).get("text") or "").strip()
        if text:
            entry["texts"].append(text)

    for paper_id, detail in zip(order, details):
        if not detail:
            continue
        entry = papers[paper_id]
        entry["title"] = entry["title"] or detail.get("title") or ""
        if detail.get("year") is not None:
            entry["year"] = detail["year"]
        entry["abstract"] = detail.get("abstract")

    if all(papers[p]["score"] is not None for p in order):
        order.sort(key=lambda p: (-papers[p]["score"], p))

    results: List[PaperSnippet] = []
    for paper_id in order:
        entry = papers[paper_id]
        year = entry["year"]
        if request.cutoff_year is not None and (year is None or year >= request.cutoff_year):
            logger.debug(f"Dropping paper {paper_id} ({year}) at cutoff {request.cutoff_year}")
            continue
        text = SNIPPET_SEPARATOR.join(entry["texts"])
        kind = SourceKind.SNIPPET
        if not text or _same_text(text, entry["title"]):
            abstract = (entry.get("abstract") or "").strip()
            if not abstract or _same_text(abstract, entry["title"]):
                logger.debug(f"Paper {paper_id} has neither a usable snippet nor an abstract")
                continue
            text, kind = abstract, SourceKind.ABSTRACT_FALLBACK
        results.append(
            PaperSnippet(
                paper_id=paper_id,
                title=entry["title"],
                year=year,
                snippet_text=text,
                source_kind=kind,
                query=request.query,
                domain=request.domain,
            )
        )
        if len(results) == request.limit:
            break
    return results


class SnippetClient:
    """Snippet search with paper-batch enrichment, a disk cache and record/replay fixtures.

    Live egress goes through one token bucket shared by every caller of the instance.
    """

    def __init__(
        self,
        settings: S2Settings,
        mode: Mode,
        fixtures: FixtureDAO,
        cache: Optional[CacheDAO] = None,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        limiter: Optional[TokenBucket] = None,
    ):
        self._settings = settings
        self._mode = mode
        self._fixtures = fixtures
        self._cache = cache
        self._limiter = limiter or TokenBucket(settings.requests_per_second)
        headers = {"x-api-key": settings.key.get_secret_value()} if settings.key else {}
        self._http = httpx.AsyncClient(
            base_url=settings.base_url,
            headers=headers,
            timeout=settings.timeout_seconds,
            transport=transport,
        )
        self._backoff = wait_exponential(multiplier=settings.backoff_seconds, min=settings.backoff_seconds)

    async def aclose(self) -> None:
        await self._http.aclose()

    async def __aenter__(self) -> "SnippetClient":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.aclose()

    async def retrieve_snippets(self, request: RetrievalRequest) -> List[PaperSnippet]:
        key = request.fingerprint(self._settings.endpoint_version)

        if self._mode is Mode.REPLAY:
            fixture = self._fixtures.replay(key)
            logger.debug(f"Replayed retrieval {key} for {request.query!r}")
            return post_process(request, fixture.responses)

        if self._mode is Mode.LIVE and self._cache is not None:
            cached = self._cache.get_one_by_id(key)
            if cached is not None:
                logger.debug(f"Cache hit {key} for {request.query!r}")
                return cached.response
            logger.debug(f"Cache miss {key} for {request.query!r}")

        responses = await self._fetch(request)
        if self._mode is Mode.RECORD:
            self._fixtures.record(key, request.model_dump(mode="json"), responses)
        results = post_process(request, responses)
        if self._cache is not None:
            self._cache.add(
                key,
                CacheEntry(fingerprint=key, response=results, fetched_at=datetime.now(timezone.utc).isoformat()),
            )
        return results

    async def _fetch(self, request: RetrievalRequest) -> Dict[str, Any]:
        params: Dict[str, Any] = {
            "query": request.query,
            "limit": min(request.limit * self._settings.snippets_per_paper, MAX_SNIPPET_LIMIT),
            "fieldsOfStudy": request.domain.value,
        }
        if request.cutoff_year is not None:
            params["year"] = f"-{request.cutoff_year - 1}"
        snippets = (await self._request("GET", "/snippet/search", params=params)).json()

        ids: List[str] = []
        for hit in snippets.get("data") or []:
            paper = hit.get("paper") or {}
            paper_id = str(paper.get("corpusId") or paper.get("paperId") or "")
            if paper_id and paper_id not in ids:
                ids.append(paper_id)
        details: List[Any] = []
        if ids:
            response = await self._request(
                "POST",
                "/paper/batch",
                params={"fields": "title,year,abstract"},
                json={"ids": [f"CorpusId:{i}" if i.isdigit() else i for i in ids]},
            )
            details = response.json()
        return {"snippets": snippets, "details": details}

    def _wait(self, retry_state: RetryCallState) -> float:
        wait = self._backoff(retry_state)
        error = retry_state.outcome.exception() if retry_state.outcome else None
        if isinstance(error, BackPressure) and error.retry_after is not None:
            return max(wait, error.retry_after)
        return wait

    async def _request(self, method: str, url: str, **kwargs) -> httpx.Response:
        try:
            async for attempt in AsyncRetrying(
                stop=stop_after_attempt(self._settings.max_attempts),
                wait=self._wait,
                retry=retry_if_exception_type((BackPressure, httpx.TransportError)),
                reraise=True,
            ):
                with attempt:
                    await self._limiter.acquire()
                    if attempt.retry_state.attempt_number > 1:
                        logger.debug(f"Retrying {method} {url}, attempt {attempt.retry_state.attempt_number}")
                    response = await self._http.request(method, url, **kwargs)
                    if response.status_code in BACK_PRESSURE_STATUSES:
                        raise BackPressure(response)
                    response.raise_for_status()
                    return response
        except httpx.HTTPStatusError as e:
            raise RetrievalError(f"{method} {url} returned {e.response.status_code}")
        except (BackPressure, httpx.HTTPError) as e:
            raise RetrievalError(f"{method} {url} failed after {self._settings.max_attempts} attempts: {e}")
