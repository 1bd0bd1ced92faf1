"""Command-line interface for hazardkit."""

import json
from pathlib import Path
from typing import List, Optional

import typer
from rich.align import Align
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table
from rich.text import Text
from typer.core import TyperGroup

from .cohort import emit_episodes, emit_timeline, ingest_episodes, read_timeline
from .config import config_schema, load_config
from .datasets import DATASETS, DatasetClient, fetch_dataset
from .exceptions import ConfigError, HazardKitError
from .lint import RULES, lint
from .log import configure_logging
from .models import BlockKind, InjectionMode
from .pipeline import ExitCode, exit_code_for, run_pipeline
from .report import lint_table
from .simulate import Scenario, inject_immortal_time_bias, simulate_cohort

BANNER = r"""
  _                             _ _    _ _   
 | |__   __ _ ______ _ _ __ __| | | _(_) |_ 
 | '_ \ / _` |_  / _` | '__/ _` | |/ / | __|
 | | | | (_| |/ / (_| | | | (_| |   <| | |_ 
 |_| |_|\__,_/___\__,_|_|  \__,_|_|\_\_|\__|
"""

TAGLINE = "Intensity-based survival analysis - cohorts, hazards and risks"


class BannerGroup(TyperGroup):
    """Custom Typer group that shows banner before help output."""

    def format_help(self, ctx, formatter):
        show_banner()
        super().format_help(ctx, formatter)


app = typer.Typer(
    name="hazardkit",
    help="hazardkit - Cox and Poisson models, competing risks and cohort linting",
    add_completion=False,
    no_args_is_help=False,
    cls=BannerGroup,
)
console = Console()


def show_banner():
    """Display the ASCII banner."""
    colors = ["cyan", "bright_cyan", "white", "bright_cyan", "cyan"]
    styled_banner = Text()
    for i, line in enumerate(BANNER.strip().split("\n")):
        styled_banner.append(line + "\n", style=f"bold {colors[i % len(colors)]}")

    console.print(Align.center(styled_banner))
    console.print(Align.center(Text(TAGLINE, style="italic bright_yellow")))
    console.print()


def fail(error: BaseException) -> typer.Exit:
    """Print an error and return the exit matching its class."""
    console.print(f"[red]Error:[/red] {error}", style="bold")
    return typer.Exit(int(exit_code_for(error)))


@app.command()
def run(
    config: Path = typer.Argument(..., help="Analysis config (YAML)"),
    output: Optional[Path] = typer.Option(
        None,
        "--output",
        "-o",
        help="Output directory (overrides the config)",
    ),
    seed: Optional[int] = typer.Option(
        None,
        "--seed",
        "-s",
        help="Random seed (overrides the config)",
    ),
    verbose: int = typer.Option(
        0,
        "--verbose",
        "-v",
        count=True,
        help="More log output (-v info, -vv debug)",
    ),
    check: bool = typer.Option(
        False,
        "--check",
        help="Validate the config and inputs without running any block",
    ),
):
    """
    Run the analysis blocks of a config file.

    Examples:

        hazardkit run analysis.yaml

        hazardkit run analysis.yaml -o results --seed 7 -v

        hazardkit run analysis.yaml --check
    """
    configure_logging(verbose)
    try:
        analysis = load_config(config)
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=console,
            transient=True,
        ) as progress:
            progress.add_task(
                description=f"Running {len(analysis.blocks)} block(s)...", total=None
            )
            result = run_pipeline(analysis, output_dir=output, seed=seed, check_only=check)
    except HazardKitError as e:
        raise fail(e)

    if check:
        console.print(
            f"✅ [green]Config OK:[/green] {len(analysis.blocks)} block(s) resolved"
        )
        return

    table = Table(title="Blocks", show_header=True, header_style="bold magenta")
    table.add_column("Block", style="cyan")
    table.add_column("Kind", style="green")
    table.add_column("Status")
    table.add_column("Artifacts", justify="right")
    for block in result.blocks:
        status = "[green]ok[/green]" if block.ok else "[red]failed[/red]"
        table.add_row(block.name, block.kind, status, str(len(block.artifacts)))
    console.print(table)

    for failure in result.failures:
        console.print(f"[red]Error:[/red] {failure}", style="bold")
    console.print(f"   Output: [cyan]{result.output_dir}/[/cyan]")
    if result.exit_code != ExitCode.OK:
        raise typer.Exit(int(result.exit_code))


@app.command("lint")
def lint_command(
    episodes: Path = typer.Argument(..., help="Episode file (id, tstart, tstop, status, ...)"),
    timeline: Optional[Path] = typer.Option(
        None,
        "--timeline",
        "-t",
        help="Covariate timeline file (id, time, variable, value)",
    ),
    admin_cutoff: Optional[float] = typer.Option(
        None,
        "--admin-cutoff",
        help="Administrative end of follow-up (default: latest tstop)",
    ),
    output: Optional[Path] = typer.Option(
        None,
        "--output",
        "-o",
        help="Write <output>.txt and <output>.json",
    ),
    sep: str = typer.Option(",", "--sep", help="Field delimiter"),
):
    """
    Check an episode file for interval, event and coding errors.

    Examples:

        hazardkit lint episodes.csv

        hazardkit lint episodes.csv -t timeline.csv -o lint-report
    """
    try:
        cohort = ingest_episodes(episodes, sep=sep, check=False)
        records = read_timeline(timeline, sep=sep) if timeline is not None else None
        report = lint(cohort, records, admin_cutoff=admin_cutoff)
    except HazardKitError as e:
        raise fail(e)

    if report.findings:
        console.print(lint_table(report))
    else:
        console.print("✅ [green]No findings[/green]")
    for key, value in report.summary.items():
        console.print(f"   {key}: {value}")
    if output is not None:
        for path in report.write(output):
            console.print(f"   Written: [cyan]{path}[/cyan]")
    if report.has_errors:
        raise typer.Exit(int(ExitCode.LINT))


@app.command()
def simulate(
    scenario: Path = typer.Argument(..., help="Scenario file (YAML)"),
    output_dir: Path = typer.Option(
        "simulated",
        "--output-dir",
        "-o",
        help="Directory for episodes, timeline and truth files",
    ),
    seed: Optional[int] = typer.Option(
        None, "--seed", "-s", min=0, help="Override the scenario seed"
    ),
    inject: Optional[InjectionMode] = typer.Option(
        None,
        "--inject",
        help="Also write a copy with the exposure miscoded as time-fixed",
    ),
):
    """
    Draw a cohort from a data-generating scenario.

    Examples:

        hazardkit simulate scenario.yaml -o sim

        hazardkit simulate scenario.yaml --seed 3 --inject ever_treated
    """
    try:
        spec = Scenario.from_yaml(scenario)
        if seed is not None:
            spec = spec.model_copy(update={"seed": seed})
        simulation = simulate_cohort(spec)
        output_dir.mkdir(parents=True, exist_ok=True)
        paths = [
            emit_episodes(simulation.cohort, output_dir / "episodes.csv"),
            emit_timeline(simulation.timeline, output_dir / "timeline.csv"),
            simulation.truth.to_yaml(output_dir / "truth.yaml"),
        ]
        if inject is not None:
            if spec.exposure is None:
                raise ConfigError("--inject needs a scenario with an exposure")
            biased = inject_immortal_time_bias(
                simulation.cohort, simulation.timeline, inject, variable=spec.exposure.name
            )
            paths.append(emit_episodes(biased, output_dir / f"episodes_{inject.value}.csv"))
    except HazardKitError as e:
        raise fail(e)

    cohort = simulation.cohort
    console.print(
        f"\n✅ [green]Success![/green] {cohort.n_subjects} subjects, "
        f"{cohort.n_episodes} episodes, {cohort.n_events()} events"
    )
    for path in paths:
        console.print(f"   • {path}")


@app.command()
def schema(
    output: Optional[Path] = typer.Option(
        None, "--output", "-o", help="Write the schema to a file instead of stdout"
    ),
):
    """Print the JSON schema of analysis config files."""
    document = json.dumps(config_schema(), indent=2, sort_keys=True)
    if output is None:
        typer.echo(document)
    else:
        output.write_text(document + "\n", encoding="utf-8")
        console.print(f"Schema written to [cyan]{output}[/cyan]")


@app.command()
def blocks():
    """List the analysis block kinds a config may use."""
    table = Table(title="Analysis Blocks", show_header=True, header_style="bold magenta")
    table.add_column("Kind", style="cyan", width=12)
    table.add_column("Description", style="white")
    for kind in BlockKind:
        table.add_row(kind.value, kind.description)
    console.print(table)

    rules = Table(title="Lint Rules", show_header=True, header_style="bold magenta")
    rules.add_column("Rule", style="cyan", width=12)
    rules.add_column("Checks", style="white")
    for rule, description in RULES.items():
        rules.add_row(rule, description)
    console.print(rules)
    console.print("\n💡 Usage: [cyan]hazardkit schema[/cyan] for every block parameter")


@app.command()
def fetch(
    names: Optional[List[str]] = typer.Argument(None, help="Datasets (default: all)"),
    data_dir: Optional[Path] = typer.Option(
        None,
        "--data-dir",
        "-d",
        help="Cache directory (default: HAZARDKIT_DATA_DIR)",
    ),
    refresh: bool = typer.Option(False, "--refresh", help="Download even when cached"),
):
    """
    Download public example datasets.

    Examples:

        hazardkit fetch

        hazardkit fetch nafld1 -d data
    """
    try:
        with DatasetClient(cache_dir=data_dir) as client:
            for name in names or sorted(DATASETS):
                path = fetch_dataset(name, client=client, refresh=refresh)
                console.print(f"   • {name}: [cyan]{path}[/cyan]")
    except HazardKitError as e:
        raise fail(e)


@app.command()
def version():
    """Show the hazardkit version."""
    from hazardkit import __version__

    console.print(f"hazardkit version: [cyan]{__version__}[/cyan]")


@app.callback(invoke_without_command=True)
def main_callback(ctx: typer.Context):
    """Main callback to show banner when no command is provided."""
    if ctx.invoked_subcommand is None:
        show_banner()

        welcome_text = Text()
        welcome_text.append("Welcome to ", style="white")
        welcome_text.append("hazardkit", style="bold cyan")
        welcome_text.append("\nSurvival analysis from a declarative config", style="italic dim")
        console.print(
            Panel(welcome_text, title="[bold cyan]hazardkit[/bold cyan]", border_style="cyan")
        )
        console.print()

        table = Table(
            title="[bold cyan]Available Commands[/bold cyan]",
            show_header=True,
            header_style="bold bright_cyan",
        )
        table.add_column("Command", style="cyan", no_wrap=True)
        table.add_column("Description", style="white")
        table.add_column("Example", style="dim")

        table.add_row("run", "Run an analysis config", "hazardkit run analysis.yaml")
        table.add_row("lint", "Lint an episode file", "hazardkit lint episodes.csv")
        table.add_row("simulate", "Simulate a cohort", "hazardkit simulate scenario.yaml")
        table.add_row("schema", "Config JSON schema", "hazardkit schema")
        table.add_row("blocks", "List block kinds", "hazardkit blocks")
        table.add_row("fetch", "Download example data", "hazardkit fetch nafld1")
        table.add_row("version", "Show version", "hazardkit version")

        console.print(table)
        console.print()


def main():
    """Entry point for the CLI."""
    app()


if __name__ == "__main__":
    main()
