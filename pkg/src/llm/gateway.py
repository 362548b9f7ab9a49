import asyncio
import re
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional

import httpx
import loguru
import orjson
from pydantic import BaseModel, ValidationError
from tenacity import AsyncRetrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from src.dao.base_model import fingerprint
from src.dao.fixtures import FixtureDAO
from src.llm.exceptions import GatewayError, StructuredOutputError
from src.llm.prompts import render_prompt
from src.llm.registry import OUTPUT_SCHEMAS
from src.llm.schemas import ModelProfile, ProfileName, StructuredRequest
from src.settings import Mode, Settings

logger = loguru.logger

SCHEMA_HEADER = "X-Output-Schema"
RUN_LOG_FILE = "llm.jsonl"
RETRY_STATUSES = {429, 500, 502, 503, 504}
FENCE = re.compile(r"```(?:json|JSON)?\s*\n?(.*?)```", re.DOTALL)
REPAIR_PROMPT = (
    "Your previous answer could not be accepted: {error}\n"
    "Reply again with only the corrected JSON document, no commentary."
)

Validator = Callable[[BaseModel], List[str]]


class _Retryable(Exception):
    pass


def strip_fences(text: str) -> str:
    match = FENCE.search(text)
    return match.group(1).strip() if match else text.strip()


def parse_structured(raw: str, schema: type[BaseModel]) -> BaseModel:
    return schema.model_validate(orjson.loads(strip_fences(raw)))


def _describe(error: Exception) -> str:
    if isinstance(error, ValidationError):
        parts = [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in error.errors()[:5]]
        return "schema validation failed: " + "; ".join(parts)
    return f"not valid JSON: {error}"


def add_run_log(path: Path) -> int:
    """JSON-lines sink for every gateway attempt; returns the loguru handler id."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return logger.add(
        str(path),
        level="DEBUG",
        serialize=True,
        enqueue=True,
        filter=lambda record: record["extra"].get("channel") == "llm",
    )


class LLMGateway:
    """Structured chat completions for the generator and judge profiles.

    Replay mode answers from recorded fixtures keyed by (model, temperature, max tokens,
    messages); record mode calls the endpoint and stores every answer.
    """

    def __init__(
        self,
        settings: Settings,
        fixtures: FixtureDAO,
        transport: Optional[httpx.AsyncBaseTransport] = None,
    ):
        self._settings = settings
        self._mode = settings.effective_llm_mode
        self._fixtures = fixtures
        self._profiles: Dict[ProfileName, ModelProfile] = {}
        self._slots: Dict[ProfileName, asyncio.Semaphore] = {}
        self._http = httpx.AsyncClient(transport=transport)

    def profile(self, name: ProfileName) -> ModelProfile:
        """Resolved profile; ConfigError when live use lacks an endpoint or model id."""
        if name not in self._profiles:
            configured = self._settings.require_profile(name.settings_attr)
            self._profiles[name] = ModelProfile.from_settings(name, configured)
            self._slots[name] = asyncio.Semaphore(self._profiles[name].in_flight)
        return self._profiles[name]

    async def aclose(self) -> None:
        await self._http.aclose()

    async def complete(
        self,
        profile: ProfileName,
        template_id: str,
        bindings: Mapping[str, str],
        schema_name: str,
        validator: Optional[Validator] = None,
        attempt_budget: Optional[int] = None,
    ) -> Any:
        request = StructuredRequest(
            profile=profile,
            prompt=render_prompt(template_id, bindings),
            schema_name=schema_name,
            attempt_budget=attempt_budget or self.profile(profile).attempt_budget,
            template_id=template_id,
        )
        return await self.complete_structured(request, validator=validator)

    async def complete_structured(self, request: StructuredRequest, validator: Optional[Validator] = None) -> Any:
        """Parsed object of the named schema, re-prompting with the error on failure."""
        schema = OUTPUT_SCHEMAS.get(request.schema_name)
        if schema is None:
            raise GatewayError(f"unknown output schema {request.schema_name!r}")
        profile = self.profile(request.profile)
        log = logger.bind(channel="llm", profile=profile.name.value, schema=request.schema_name, template=request.template_id)

        messages = [{"role": "user", "content": request.prompt}]
        raw = None
        for attempt in range(1, request.attempt_budget + 1):
            raw = await self._chat(profile, messages, request.schema_name)
            try:
                parsed = parse_structured(raw, schema)
                problems = validator(parsed) if validator else []
            except (orjson.JSONDecodeError, ValidationError) as e:
                problems = [_describe(e)]
            if not problems:
                log.bind(attempt=attempt, prompt=messages[-1]["content"], raw=raw, outcome="ok").debug(
                    f"{request.schema_name} accepted on attempt {attempt}"
                )
                return parsed
            error = "; ".join(problems)
            log.bind(attempt=attempt, prompt=messages[-1]["content"], raw=raw, outcome=error).debug(
                f"{request.schema_name} rejected on attempt {attempt}"
            )
            messages = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": REPAIR_PROMPT.format(error=error)},
            ]
        logger.warning(f"{request.schema_name}: no valid answer in {request.attempt_budget} attempts")
        raise StructuredOutputError(
            f"{request.schema_name}: no schema-valid answer within {request.attempt_budget} attempts",
            raw_response=raw,
        )

    async def _chat(self, profile: ModelProfile, messages: List[Dict[str, str]], schema_name: str) -> str:
        key = fingerprint(
            {
                "model": profile.model_id,
                "temperature": profile.temperature,
                "max_tokens": profile.max_output_tokens,
                "messages": messages,
            }
        )
        if self._mode is Mode.REPLAY:
            return self._fixtures.replay(key).responses["content"]

        body: Dict[str, Any] = {
            "model": profile.model_id,
            "messages": messages,
            "temperature": profile.temperature,
            "max_tokens": profile.max_output_tokens,
        }
        if profile.suppress_reasoning:
            body["chat_template_kwargs"] = {"enable_thinking": False}
        headers = {SCHEMA_HEADER: schema_name}
        if profile.api_key:
            headers["Authorization"] = f"Bearer {profile.api_key.get_secret_value()}"

        async with self._slots[profile.name]:
            content = await self._post(profile, body, headers)
        if self._mode is Mode.RECORD:
            self._fixtures.record(key, {"model": profile.model_id, "schema": schema_name}, {"content": content})
        return content

    async def _post(self, profile: ModelProfile, body: Dict[str, Any], headers: Dict[str, str]) -> str:
        url = f"{profile.endpoint.rstrip('/')}/chat/completions"
        try:
            async for attempt in AsyncRetrying(
                stop=stop_after_attempt(profile.max_transport_attempts),
                wait=wait_exponential(multiplier=profile.backoff_seconds, min=profile.backoff_seconds),
                retry=retry_if_exception_type((_Retryable, httpx.TransportError)),
                reraise=True,
            ):
                with attempt:
                    response = await self._http.post(url, json=body, headers=headers, timeout=profile.timeout_seconds)
                    if response.status_code in RETRY_STATUSES:
                        raise _Retryable(f"{url} returned {response.status_code}")
                    response.raise_for_status()
                    return response.json()["choices"][0]["message"]["content"] or ""
        except (_Retryable, httpx.HTTPError) as e:
            raise GatewayError(f"{profile.name.value} endpoint failed: {e}")
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise GatewayError(f"{profile.name.value} endpoint returned an unexpected payload: {e}")
