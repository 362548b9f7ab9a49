from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
import httpx
import loguru
import orjson

from src.analysis.report import emit_report, render_analysis_report
from src.cli import CliContext, pass_cli, run_async
from src.core.schemas import Strategy
from src.dao.storage import atomic_write, dumps_canonical
from src.evaluation.dataset import filter_dataset, load_records, screen_leakage
from src.evaluation.harness import arm_settings, run_arm
from src.evaluation.schemas import ArmReport, BenchRecord, StrategyConfig
from src.evaluation.winrate import format_rate_tables
from src.llm.gateway import RUN_LOG_FILE, add_run_log
from src.llm.schemas import ProfileName
from src.pipeline.services import build_services
from src.settings import Settings

logger = loguru.logger

ELIGIBILITY_FILE = "eligibility.json"
LEAKAGE_FILE = "leakage.json"
EVALUATION_REPORT = "evaluation.md"


def parse_ks(ctx: click.Context, param: click.Parameter, value: str) -> List[int]:
    try:
        ks = sorted({int(part) for part in value.split(",") if part.strip()})
    except ValueError:
        raise click.BadParameter("expected comma-separated integers, e.g. 1,2,3")
    if not ks or ks[0] < 1:
        raise click.BadParameter("every k must be at least 1")
    return ks


def parse_overrides(ctx: click.Context, param: click.Parameter, value: Tuple[str, ...]) -> Dict[str, Any]:
    overrides = {}
    for item in value:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise click.BadParameter(f"{item!r} is not KEY=VALUE")
        try:
            overrides[key.strip()] = orjson.loads(raw)
        except orjson.JSONDecodeError:
            overrides[key.strip()] = raw
    return overrides


async def run_arms(
    settings: Settings,
    configs: Sequence[StrategyConfig],
    records: List[BenchRecord],
    out: Path,
    ks: Sequence[int],
    judge: bool = True,
    s2_transport: Optional[httpx.AsyncBaseTransport] = None,
    llm_transport: Optional[httpx.AsyncBaseTransport] = None,
) -> List[ArmReport]:
    """Arms one after another so later arms reuse the retrieval cache."""
    sink = add_run_log(out / RUN_LOG_FILE)
    reports = []
    try:
        for config in configs:
            async with build_services(arm_settings(settings, config), s2_transport, llm_transport) as services:
                if judge:
                    services.gateway.profile(ProfileName.JUDGE)
                reports.append(await run_arm(services, config, records, out, ks, judge))
    finally:
        logger.remove(sink)
    return reports


@click.group("evaluate", invoke_without_command=True)
@click.option("--arm", "arms", multiple=True, type=click.Choice([s.value for s in Strategy]), help="Strategy to evaluate; repeatable.")
@click.option("--records", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Benchmark JSON-lines file.")
@click.option("--k", "ks", default="1,2,3", show_default=True, callback=parse_ks)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("evaluation"), show_default=True)
@click.option("--override", "overrides", multiple=True, callback=parse_overrides, help="Pipeline cap for every arm, KEY=VALUE.")
@click.option("--no-judge", is_flag=True, help="Only run the pipelines, skip ground truth and judging.")
@pass_cli
@click.pass_context
def evaluate(
    ctx: click.Context,
    cli: CliContext,
    arms: Tuple[str, ...],
    records: Optional[Path],
    ks: List[int],
    out: Path,
    overrides: Dict[str, Any],
    no_judge: bool,
) -> None:
    """Run strategy arms over a benchmark and report win rates against ground truth."""
    if ctx.invoked_subcommand is not None:
        return
    if records is None:
        raise click.UsageError("--records is required")

    result = filter_dataset(load_records(records))
    atomic_write(
        out / ELIGIBILITY_FILE,
        dumps_canonical(
            {
                "eligible": [r.record_id for r in result.eligible],
                "rejected": [r.to_dict() for r in result.rejected],
            }
        ),
    )
    configs = [StrategyConfig(strategy=Strategy(arm), overrides=overrides) for arm in (arms or [Strategy.IDEA_CATALYST.value])]
    reports = run_async(run_arms(cli.settings(), configs, result.eligible, out, ks, not no_judge, cli.s2_transport, cli.llm_transport))

    tables = [t for report in reports for t in report.tables]
    for report in reports:
        click.echo(f"{report.arm.value}: {len(report.completed)} completed, {len(report.failed)} failed")
    if tables:
        click.echo(format_rate_tables(tables), nl=False)
        emit_report(render_analysis_report(tables=tables), out, EVALUATION_REPORT)


@evaluate.command("screen")
@click.option("--records", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("evaluation"), show_default=True)
@pass_cli
def screen(cli: CliContext, records: Path, out: Path) -> None:
    """Ask the judge whether each problem context leaks its source insight (advisory only)."""
    settings = cli.settings()

    async def run():
        async with build_services(settings, cli.s2_transport, cli.llm_transport) as services:
            return await screen_leakage(services, load_records(records))

    findings = run_async(run())
    atomic_write(out / LEAKAGE_FILE, dumps_canonical([f.to_dict() for f in findings]))
    flagged = [f.record_id for f in findings if f.leaks]
    click.echo(f"{len(flagged)} of {len(findings)} records flagged as leaking: {', '.join(flagged) or 'none'}")
