import asyncio
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Awaitable, Dict, Optional, TypeVar

import click
import httpx

from src.core.exceptions import CatalystError
from src.settings import Mode, Settings, load_settings

T = TypeVar("T")

MODE_CHOICE = click.Choice([m.value for m in Mode])


@dataclass
class CliContext:
    """Global options shared by every command; settings are resolved per command."""

    config_file: Optional[Path] = None
    overrides: Dict[str, Any] = field(default_factory=dict)
    # injected by tests; None means real network transports
    s2_transport: Optional[httpx.AsyncBaseTransport] = None
    llm_transport: Optional[httpx.AsyncBaseTransport] = None

    def settings(self, **extra: Any) -> Settings:
        return load_settings(self.config_file, **{**self.overrides, **extra})


pass_cli = click.make_pass_decorator(CliContext, ensure=True)


class CatalystGroup(click.Group):
    """Turns CatalystError into its exit status with a one-line diagnostic on stderr."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except CatalystError as e:
            click.echo(f"error: {e.detail}", err=True)
            ctx.exit(e.exit_code)


def run_async(coro: Awaitable[T]) -> T:
    return asyncio.run(coro)
