from dataclasses import dataclass
from typing import Optional

import httpx

from src.dao.fixtures import FixtureDAO
from src.llm.gateway import LLMGateway
from src.retrieval.client import SnippetClient
from src.retrieval.dao import CacheDAO
from src.settings import PipelineSettings, Settings


@dataclass
class Services:
    """Everything a stage talks to; built once per command."""

    settings: Settings
    gateway: LLMGateway
    snippets: SnippetClient

    @property
    def caps(self) -> PipelineSettings:
        return self.settings.pipeline

    async def aclose(self) -> None:
        await self.gateway.aclose()
        await self.snippets.aclose()

    async def __aenter__(self) -> "Services":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.aclose()


def build_services(
    settings: Settings,
    s2_transport: Optional[httpx.AsyncBaseTransport] = None,
    llm_transport: Optional[httpx.AsyncBaseTransport] = None,
) -> Services:
    snippets = SnippetClient(
        settings.s2,
        settings.retrieval_mode,
        fixtures=FixtureDAO(settings.fixtures_dir, "s2"),
        cache=CacheDAO(settings.cache_dir),
        transport=s2_transport,
    )
    gateway = LLMGateway(settings, FixtureDAO(settings.fixtures_dir, "llm"), transport=llm_transport)
    return Services(settings=settings, gateway=gateway, snippets=snippets)
