"""Command-line interface for vacufix."""

import json
import logging
import sys
from pathlib import Path
from typing import Callable, List, NoReturn, Optional, Tuple

import click
import numpy as np
from rich.console import Console
from rich.markup import escape

from vacufix import __version__
from vacufix.core import artifacts
from vacufix.core.candidates import Stage
from vacufix.core.errors import VacufixError
from vacufix.core.plan import SupportPlanner
from vacufix.ui.report import PlanSummary
from vacufix.utils.config import PlannerConfig
from vacufix.utils.logger import setup_logger

console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger("vacufix.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

config_argument = click.argument(
    "config_file", type=click.Path(dir_okay=False, path_type=Path), metavar="CONFIG"
)


@click.group()
@click.version_option(version=__version__, prog_name="vacufix")
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
@click.option(
    "--log-file",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Also write a detailed log to this file",
)
@click.pass_context
def cli(ctx: click.Context, verbose: bool, log_file: Optional[Path]) -> None:
    """
    vacufix - plan balloon-hand supports for screw removal.

    Samples the underside of a part, filters support candidates, enumerates
    two- and three-point configurations and checks that suction holds the
    part while a screwdriver presses on each screw.
    """
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose
    setup_logger("vacufix", level=logging.DEBUG if verbose else logging.WARNING, log_file=log_file)


def _fail(ctx: click.Context, error: Exception) -> NoReturn:
    field = getattr(error, "field", None)
    prefix = "Configuration error" if field else "Error"
    err_console.print(f"[red]{prefix}:[/red] {escape(str(error))}", highlight=False)
    if ctx.obj.get("verbose"):
        err_console.print_exception()
    sys.exit(EXIT_ERROR)


def _run(ctx: click.Context, action: Callable[[], int]) -> NoReturn:
    try:
        code = action()
    except (VacufixError, OSError, ValueError) as e:
        _fail(ctx, e)
    sys.exit(code)


def _parse_contacts(raw: Tuple[str, ...]) -> Optional[np.ndarray]:
    if not raw:
        return None
    contacts: List[List[float]] = []
    for item in raw:
        parts = item.split(",")
        if len(parts) != 3:
            raise VacufixError(f"--contact expects x,y,z, got {item!r}")
        try:
            contacts.append([float(p) for p in parts])
        except ValueError as e:
            raise VacufixError(f"--contact expects numbers, got {item!r}") from e
    if len(contacts) not in (2, 3):
        raise VacufixError(f"Give 2 or 3 --contact values, got {len(contacts)}")
    return np.array(contacts)


def _target(config_id: Optional[str], contacts: Tuple[str, ...]) -> Optional[np.ndarray]:
    if config_id and contacts:
        raise VacufixError("Use either --config-id or --contact, not both")
    parsed = _parse_contacts(contacts)
    if config_id is None and parsed is None:
        raise VacufixError("One of --config-id or --contact is required")
    return parsed


@cli.command()
@config_argument
@click.option(
    "--output",
    "-o",
    type=click.Path(file_okay=False, path_type=Path),
    help="Artifact directory (default: output.directory from the config)",
)
@click.option("--show-progress/--no-progress", default=False, help="Show progress bars")
@click.pass_context
def plan(
    ctx: click.Context, config_file: Path, output: Optional[Path], show_progress: bool
) -> None:
    """
    Run the full pipeline and write every artifact.

    Exit status is 0 when at least one configuration is feasible, 2 when none
    is, and 1 on error.

    Example:
        vacufix plan part.json --output out/
    """

    def action() -> int:
        config = PlannerConfig(config_file)
        planner = SupportPlanner(config, show_progress=show_progress)
        out_dir = output or config.output_dir()
        outcome = planner.plan(out_dir)
        PlanSummary(console).show(outcome)
        console.print(f"\n[green]Artifacts written to:[/green] {out_dir}")
        return EXIT_OK if outcome.has_feasible else EXIT_INFEASIBLE

    _run(ctx, action)


@cli.command(name="filter")
@config_argument
@click.option(
    "--stage",
    "-s",
    "stage_name",
    type=click.Choice([s.value for s in Stage], case_sensitive=False),
    default=Stage.P4.value,
    show_default=True,
    help="Last stage to run",
)
@click.option("--output", "-o", type=click.Path(file_okay=False, path_type=Path))
@click.option("--show-progress/--no-progress", default=False, help="Show progress bars")
@click.pass_context
def filter_command(
    ctx: click.Context,
    config_file: Path,
    stage_name: str,
    output: Optional[Path],
    show_progress: bool,
) -> None:
    """Run the candidate filters through one stage and dump its points."""

    def action() -> int:
        config = PlannerConfig(config_file)
        stage = Stage.parse(stage_name)
        result = SupportPlanner(config, show_progress=show_progress).filter(stop_at=stage)
        out_dir = output or config.output_dir()
        points = result.stages[stage]
        artifacts.write_stage_csv(points, out_dir / f"stage_{stage.value}.csv")
        artifacts.write_stage_ply(points, out_dir / f"stage_{stage.value}.ply")
        console.print(f"{stage.value}: {len(points)} point(s)")
        if result.first_empty is not None:
            console.print(f"[yellow]First empty stage:[/yellow] {result.first_empty.value}")
        return EXIT_OK

    _run(ctx, action)


@cli.command()
@config_argument
@click.option("--config-id", help="Configuration id from configs.json, e.g. 3P-0007")
@click.option(
    "--contact", "contacts", multiple=True, help="Inline contact x,y,z (mm), 2 or 3 times"
)
@click.option("--screw-id", required=True, help="Screw id from the config")
@click.option("--press", type=float, default=0.0, show_default=True, help="Press force (N)")
@click.pass_context
def analyze(
    ctx: click.Context,
    config_file: Path,
    config_id: Optional[str],
    contacts: Tuple[str, ...],
    screw_id: str,
    press: float,
) -> None:
    """Solve one configuration under one screw and print the result as JSON."""

    def action() -> int:
        if press < 0:
            raise VacufixError(f"--press must be >= 0, got {press}")
        inline = _target(config_id, contacts)
        planner = SupportPlanner(PlannerConfig(config_file))
        positions, result = planner.analyze(screw_id, press, config_id, inline)
        data = {
            "config_id": config_id,
            "screw_id": screw_id,
            "press_N": press,
            "contacts_mm": positions,
            "forces_N": result.forces,
            "residual": result.residual,
            "within_tolerance": result.within_tolerance,
            "feasible": result.feasible,
            "limiting_contact": result.limiting_contact,
            "suction_demand_N": result.suction_demand,
        }
        click.echo(json.dumps(artifacts.round_floats(data), indent=2))
        return EXIT_OK

    _run(ctx, action)


@cli.command()
@config_argument
@click.option("--config-id", help="Configuration id from configs.json")
@click.option(
    "--contact", "contacts", multiple=True, help="Inline contact x,y,z (mm), 2 or 3 times"
)
@click.option("--screw-id", required=True, help="Screw id from the config")
@click.option(
    "--output", "-o", type=click.Path(dir_okay=False, path_type=Path), help="Sweep CSV path"
)
@click.pass_context
def sweep(
    ctx: click.Context,
    config_file: Path,
    config_id: Optional[str],
    contacts: Tuple[str, ...],
    screw_id: str,
    output: Optional[Path],
) -> None:
    """Sweep the press force for one configuration and screw."""

    def action() -> int:
        inline = _target(config_id, contacts)
        config = PlannerConfig(config_file)
        planner = SupportPlanner(config)
        _, result = planner.sweep(screw_id, config_id, inline)
        label = config_id or "inline"
        path = output or config.output_dir() / f"sweep_{label}_{screw_id}.csv"
        artifacts.write_sweeps_csv([(label, screw_id, result)], path)
        PlanSummary(console).show_sweep(result, float(config.get("sweep.end")))
        return EXIT_OK

    _run(ctx, action)


def main() -> None:
    """Main entry point for the CLI."""
    cli(obj={})


if __name__ == "__main__":
    main()
