from pathlib import Path
from typing import Optional

import click
import httpx
import loguru

from src.analysis.report import emit_report, render_run_report
from src.cli import CliContext, pass_cli, run_async
from src.core.schemas import ResearchProblem, RunArtifact, Strategy
from src.core.serialization import load_artifact
from src.core.validation import check_integrity
from src.llm.gateway import RUN_LOG_FILE, add_run_log
from src.pipeline.runner import Pipeline, pending_stages
from src.pipeline.services import build_services
from src.retrieval.domains import map_to_coarse_domain
from src.settings import Mode, Settings

logger = loguru.logger

STRATEGY_CHOICE = click.Choice([s.value for s in Strategy])


async def run_ideate(
    settings: Settings,
    statement: str,
    target_domain: str,
    cutoff_year: Optional[int],
    strategy: Strategy,
    out: Path,
    s2_transport: Optional[httpx.AsyncBaseTransport] = None,
    llm_transport: Optional[httpx.AsyncBaseTransport] = None,
) -> RunArtifact:
    sink = add_run_log(Path(out) / RUN_LOG_FILE)
    try:
        async with build_services(settings, s2_transport, llm_transport) as services:
            coarse = await map_to_coarse_domain(target_domain, services.gateway)
            problem = ResearchProblem(
                statement=statement,
                target_domain_fine=target_domain,
                target_domain_coarse=coarse,
                cutoff_year=cutoff_year,
            )
            run = await Pipeline(services).run(problem, out, strategy)
    finally:
        logger.remove(sink)
    emit_report(render_run_report(run, settings.pipeline.top_k), out)
    return run


async def run_resume(
    settings: Settings,
    run: RunArtifact,
    out: Path,
    s2_transport: Optional[httpx.AsyncBaseTransport] = None,
    llm_transport: Optional[httpx.AsyncBaseTransport] = None,
) -> RunArtifact:
    sink = add_run_log(Path(out) / RUN_LOG_FILE)
    try:
        async with build_services(settings, s2_transport, llm_transport) as services:
            run = await Pipeline(services).resume(run, out)
    finally:
        logger.remove(sink)
    emit_report(render_run_report(run, settings.pipeline.top_k), out)
    return run


@click.command("ideate")
@click.argument("problem")
@click.option("--target-domain", required=True, help="Fine-grained target field, e.g. 'Natural Language Processing'.")
@click.option("--cutoff-year", type=click.IntRange(min=1900), help="Only papers published before this year are retrieved.")
@click.option("--strategy", type=STRATEGY_CHOICE, default=Strategy.IDEA_CATALYST.value, show_default=True)
@click.option("--top-k", type=click.IntRange(min=1), help="Fragments listed as top results in the report.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True, help="Run directory.")
@pass_cli
def ideate(
    cli: CliContext,
    problem: str,
    target_domain: str,
    cutoff_year: Optional[int],
    strategy: str,
    top_k: Optional[int],
    out: Path,
) -> None:
    """Generate and rank interdisciplinary idea fragments for PROBLEM."""
    if not problem.strip():
        raise click.BadParameter("the problem statement is empty", param_hint="PROBLEM")
    settings = cli.settings(**({"pipeline": {"top_k": top_k}} if top_k else {}))
    run = run_async(
        run_ideate(settings, problem, target_domain, cutoff_year, Strategy(strategy), out, cli.s2_transport, cli.llm_transport)
    )
    click.echo(f"run {run.run_id}: {len(run.fragments)} fragments, artifact and report in {out}")


@click.command("resume")
@click.argument("artifact", type=click.Path(exists=True, path_type=Path))
@pass_cli
def resume(cli: CliContext, artifact: Path) -> None:
    """Continue a run from the first stage without a checkpoint."""
    run = load_artifact(artifact)
    check_integrity(run)
    if not pending_stages(run):
        click.echo(f"nothing to resume: run {run.run_id} has every stage checkpointed")
        return
    out = artifact if artifact.is_dir() else artifact.parent
    run = run_async(run_resume(cli.settings(), run, out, cli.s2_transport, cli.llm_transport))
    click.echo(f"run {run.run_id}: resumed, {len(run.fragments)} fragments in {out}")


@click.command("record")
@click.argument("problem")
@click.option("--target-domain", required=True)
@click.option("--cutoff-year", type=click.IntRange(min=1900))
@click.option("--strategy", type=STRATEGY_CHOICE, default=Strategy.IDEA_CATALYST.value, show_default=True)
@click.option("--top-k", type=click.IntRange(min=1))
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@pass_cli
@click.pass_context
def record_fixtures(ctx: click.Context, cli: CliContext, **options) -> None:
    """Run ideate against live services, storing every response as a replay fixture."""
    cli.overrides.update(retrieval_mode=Mode.RECORD, llm_mode=Mode.RECORD)
    ctx.invoke(ideate, **options)
