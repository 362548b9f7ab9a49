import click

from src.cli import CliContext, pass_cli
from src.core.exceptions import EXIT_RUNTIME
from src.dao.fixtures import missing_fixtures
from src.retrieval.dao import CacheDAO


@click.group("cache")
def cache() -> None:
    """Inspect or clear the retrieval cache."""


@cache.command("stats")
@pass_cli
def cache_stats(cli: CliContext) -> None:
    store = CacheDAO(cli.settings().cache_dir)
    click.echo(f"entries: {store.count()}")
    click.echo(f"bytes: {store.size_bytes()}")


@cache.command("purge")
@pass_cli
def cache_purge(cli: CliContext) -> None:
    removed = CacheDAO(cli.settings().cache_dir).purge()
    click.echo(f"removed {removed} entries")


@click.group("fixtures")
def fixtures() -> None:
    """Record or check replay fixtures."""


@fixtures.command("verify")
@pass_cli
@click.pass_context
def fixtures_verify(ctx: click.Context, cli: CliContext) -> None:
    """Every fingerprint in the fixture index must have its file."""
    root = cli.settings().fixtures_dir
    missing = missing_fixtures(root)
    if missing:
        for key in missing:
            click.echo(f"missing fixture {key}", err=True)
        ctx.exit(EXIT_RUNTIME)
    click.echo(f"all indexed fixtures present in {root}")
