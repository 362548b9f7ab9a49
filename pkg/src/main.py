import sys
from pathlib import Path
from typing import Optional

import click
import loguru

from src.analysis.commands import analyze
from src.cli import MODE_CHOICE, CatalystGroup, CliContext
from src.evaluation.commands import evaluate
from src.pipeline.commands import ideate, record_fixtures, resume
from src.retrieval.commands import cache, fixtures
from src.settings import Mode

logger = loguru.logger

LOG_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {name}:{function} - {message}"


def configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT, filter=lambda record: "channel" not in record["extra"])


def register_commands(group: click.Group) -> None:
    group.add_command(ideate)
    group.add_command(resume)
    group.add_command(evaluate)
    group.add_command(analyze)
    group.add_command(cache)
    fixtures.add_command(record_fixtures)
    group.add_command(fixtures)


@click.group(cls=CatalystGroup)
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="TOML config file.")
@click.option("--retrieval-mode", type=MODE_CHOICE, help="live, replay or record.")
@click.option("--llm-mode", type=MODE_CHOICE, help="Defaults to the retrieval mode.")
@click.option("--fixtures-dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False), help="Default INFO.")
@click.pass_context
def cli(
    ctx: click.Context,
    config_file: Optional[Path],
    retrieval_mode: Optional[str],
    llm_mode: Optional[str],
    fixtures_dir: Optional[Path],
    cache_dir: Optional[Path],
    log_level: Optional[str],
) -> None:
    """Interdisciplinary idea fragments from literature-grounded source domains."""
    configure_logging(log_level or "INFO")
    context = ctx.ensure_object(CliContext)
    context.config_file = config_file
    context.overrides.update(
        {
            "retrieval_mode": Mode(retrieval_mode) if retrieval_mode else None,
            "llm_mode": Mode(llm_mode) if llm_mode else None,
            "fixtures_dir": fixtures_dir,
            "cache_dir": cache_dir,
            "log_level": log_level.upper() if log_level else None,
        }
    )


register_commands(cli)


def main() -> None:
    cli(prog_name="idea-catalyst")


if __name__ == "__main__":
    main()
