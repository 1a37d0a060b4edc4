"""Rich terminal summaries of planning results."""

from typing import Dict, Optional

from rich import box
from rich.console import Console
from rich.table import Table

from vacufix.core.plan import PlanOutcome
from vacufix.core.statics import SweepResult


class PlanSummary:
    """Renders plan results as rich tables."""

    def __init__(self, console: Optional[Console] = None, top: int = 10):
        """
        Initialize the summary renderer.

        Args:
            console: Console to print to (default: stdout)
            top: Number of ranked configurations to list
        """
        self.console = console or Console()
        self.top = top

    def show(self, outcome: PlanOutcome) -> None:
        """Print stage counts, ranking and per-screw verdicts."""
        report = outcome.report
        self.show_stage_counts(report.stage_counts, report.first_empty)

        for arity, reason in report.skipped_arities.items():
            self.console.print(f"[yellow]{arity} skipped:[/yellow] {reason}")
        for arity, counts in report.hull_counts.items():
            self.console.print(
                f"[cyan]{arity}:[/cyan] {counts['com_inside']}/{counts['enumerated']} "
                "configuration(s) enclose the centre of mass"
            )

        self.show_ranking(outcome)
        self.show_screws(outcome)

        if outcome.has_feasible:
            best = outcome.ranked.feasible[0].config
            self.console.print(
                f"\n[green]✓ Best configuration:[/green] {best.config_id} "
                f"({len(outcome.ranked.feasible)} feasible)"
            )
        else:
            self.console.print("\n[red]✗ No configuration stays within the suction limit[/red]")

    def show_stage_counts(self, counts: Dict[str, int], first_empty: Optional[str]) -> None:
        """Table of points per filter stage."""
        table = Table(title="Candidate filters", box=box.SIMPLE)
        table.add_column("Stage", style="cyan")
        table.add_column("Points", justify="right")
        for stage, count in counts.items():
            style = "red" if stage == first_empty else None
            table.add_row(stage, str(count), style=style)
        self.console.print(table)

    def show_ranking(self, outcome: PlanOutcome) -> None:
        """Top ranked configurations."""
        if not len(outcome.ranked):
            return
        table = Table(title=f"Top {self.top} configurations", box=box.SIMPLE)
        table.add_column("Rank", justify="right")
        table.add_column("Config", style="cyan")
        table.add_column("Feasible")
        table.add_column("Worst suction (N)", justify="right")
        table.add_column("Margin (mm)", justify="right")
        table.add_column("Area (mm²)", justify="right")
        for entry in outcome.ranked.entries[: self.top]:
            score = entry.score
            table.add_row(
                str(entry.rank),
                entry.config.config_id,
                "[green]yes[/green]" if score.feasible else "[red]no[/red]",
                f"{score.worst_suction_demand:.3g}",
                f"{score.margin:.3g}",
                f"{score.area:.4g}",
            )
        self.console.print(table)

    def show_screws(self, outcome: PlanOutcome) -> None:
        """Per-screw critical press of the best 2P and 3P configurations."""
        table = Table(title="Per-screw verdicts", box=box.SIMPLE)
        table.add_column("Screw", style="cyan")
        table.add_column("2P")
        table.add_column("3P")
        for row in outcome.report.screws:
            if row.get("excluded"):
                table.add_row(row["screw_id"], "[dim]excluded[/dim]", "[dim]excluded[/dim]")
                continue
            cells = []
            for arity in ("2P", "3P"):
                verdict = row.get(arity)
                if verdict is None:
                    cells.append("-")
                elif verdict["stable"]:
                    cells.append("[green]stable[/green]")
                else:
                    cells.append(f"[red]fails at {verdict['critical_press_N']:g} N[/red]")
            table.add_row(row["screw_id"], *cells)
        self.console.print(table)

    def show_sweep(self, sweep: SweepResult, end: float) -> None:
        """One-line sweep verdict."""
        if sweep.critical_press is None:
            self.console.print(f"[green]stable through {float(end)} N[/green]")
        else:
            self.console.print(f"[red]critical press {sweep.critical_press:g} N[/red]")
