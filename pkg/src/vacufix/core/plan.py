"""End-to-end support planning for one part."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from vacufix import __version__
from vacufix.core import artifacts
from vacufix.core.candidates import STAGE_ORDER, CandidateFilter, PipelineResult, Stage
from vacufix.core.errors import DegenerateGeometryError, TooFewCandidatesError, UnknownIdError
from vacufix.core.mesh import MassProperties, TriMesh, load_stl, resolve_mass_properties
from vacufix.core.statics import (
    EquilibriumResult,
    ForceTable,
    ScrewSpec,
    StaticsEngine,
    SweepResult,
    screw_force_table,
)
from vacufix.core.supports import (
    RankedPlan,
    SupportConfig,
    configs_to_records,
    enumerate_configs,
    evaluate_config,
    partition_grid,
    rank_configs,
)
from vacufix.utils.config import PlannerConfig, worker_count

logger = logging.getLogger(__name__)


@dataclass
class PlanReport:
    """Summary of one planning run; serialises to ``report.json``."""

    mesh: Dict[str, Any]
    stage_counts: Dict[str, int]
    first_empty: Optional[str]
    hull_counts: Dict[str, Dict[str, int]]
    skipped_arities: Dict[str, str]
    ranking: List[Dict[str, Any]]
    screws: List[Dict[str, Any]]
    press_checks: Dict[str, Dict[str, Dict[str, bool]]]
    artifacts: List[str] = field(default_factory=list)
    provenance: Dict[str, str] = field(default_factory=dict)

    @property
    def feasible_count(self) -> int:
        """Configurations stable over the whole sweep."""
        return sum(1 for r in self.ranking if r["feasible"])

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready form."""
        return {
            "provenance": self.provenance,
            "mesh": self.mesh,
            "stage_counts": self.stage_counts,
            "first_empty_stage": self.first_empty,
            "hull_test": self.hull_counts,
            "skipped_arities": self.skipped_arities,
            "feasible_configs": self.feasible_count,
            "ranking": self.ranking,
            "screws": self.screws,
            "press_checks": self.press_checks,
            "artifacts": self.artifacts,
        }


@dataclass
class PlanOutcome:
    """Everything computed by SupportPlanner.plan."""

    pipeline: PipelineResult
    ranked: RankedPlan
    force_table: ForceTable
    report: PlanReport

    @property
    def has_feasible(self) -> bool:
        """True if at least one configuration is stable."""
        return bool(self.ranked.feasible)


class SupportPlanner:
    """Runs filters, enumeration, statics and ranking for one configured part."""

    def __init__(self, config: PlannerConfig, show_progress: bool = False):
        """
        Initialize the planner.

        Args:
            config: Planner configuration
            show_progress: Show progress bars during the filter stages
        """
        self.config = config
        self.show_progress = show_progress
        self.params = config.filter_params()
        self.settings = config.statics_settings()
        self._mesh: Optional[TriMesh] = None
        self._mass: Optional[MassProperties] = None

    @property
    def mesh(self) -> TriMesh:
        """The configured mesh, loaded on first use."""
        if self._mesh is None:
            self._mesh = load_stl(self.config.mesh_path(), self.config.load_options())
        return self._mesh

    @property
    def mass(self) -> MassProperties:
        """Mass properties with configured overrides."""
        if self._mass is None:
            m = self.config.settings["mesh"]
            self._mass = resolve_mass_properties(
                self.mesh, float(m["density"]), com=m["com"], mass=m["mass"]
            )
            logger.info(
                f"Mass {self._mass.mass:.6g} kg, COM "
                f"({self._mass.com[0]:.6g}, {self._mass.com[1]:.6g}, {self._mass.com[2]:.6g}) mm"
            )
        return self._mass

    @property
    def engine(self) -> StaticsEngine:
        """Statics engine of the part."""
        return StaticsEngine(self.mass.com, self.mass.mass, self.mesh.bbox_diagonal, self.settings)

    def screws(self) -> List[ScrewSpec]:
        """Screws to analyse; the COM stands in when none is configured."""
        screws = [s for s in self.config.screws() if not s.exclude]
        skipped = [s.id for s in self.config.screws() if s.exclude]
        if skipped:
            logger.info(f"Excluded screw(s): {', '.join(skipped)}")
        if not screws:
            logger.warning("No screw configured; sweeping a press applied at the COM")
            screws = [ScrewSpec(id="com", position=self.mass.com)]
        return screws

    def screw(self, screw_id: str) -> ScrewSpec:
        """
        Configured screw by id.

        Raises:
            UnknownIdError: If no screw has that id
        """
        for screw in self.config.screws():
            if screw.id == screw_id:
                return screw
        if screw_id == "com" and not self.config.screws():
            return ScrewSpec(id="com", position=self.mass.com)
        raise UnknownIdError(f"Unknown screw id {screw_id!r}")

    def filter(self, stop_at: Optional[Stage] = None) -> PipelineResult:
        """Run the candidate filters."""
        return CandidateFilter(self.params, self.show_progress).run(
            self.mesh, self.mass.com, stop_at
        )

    def configurations(
        self, pipeline: PipelineResult
    ) -> Tuple[List[SupportConfig], Dict[str, Dict[str, int]], Dict[str, str]]:
        """
        Enumerate and hull-test configurations of every configured arity.

        Returns:
            (evaluated configs, hull counts per arity, skipped arities with reasons)
        """
        planner = self.config.settings["planner"]
        p4 = pipeline.stages.get(Stage.P4)
        configs: List[SupportConfig] = []
        counts: Dict[str, Dict[str, int]] = {}
        skipped: Dict[str, str] = {}
        if p4 is None or not len(p4):
            for arity in planner["arities"]:
                skipped[f"{arity}P"] = "no P4 candidate"
            return configs, counts, skipped

        partition = partition_grid(p4, float(planner["spacing_d"]))
        for arity in sorted(planner["arities"]):
            label = f"{arity}P"
            try:
                raw = enumerate_configs(
                    partition,
                    arity,
                    footprint_radius=self.params.suction_radius,
                    one_per_cell=bool(planner["one_per_cell"]),
                    enforce_spacing=bool(planner["enforce_spacing"]),
                    collinear_deg=float(planner["collinear_deg"]),
                )
            except TooFewCandidatesError as e:
                logger.warning(f"Skipping {label}: {e}")
                skipped[label] = str(e)
                continue
            evaluated = [
                evaluate_config(c, self.mass.com, int(planner["samples_per_circle"])) for c in raw
            ]
            inside = sum(1 for c in evaluated if c.com_inside)
            counts[label] = {"enumerated": len(evaluated), "com_inside": inside}
            logger.info(f"{label}: {inside}/{len(evaluated)} configuration(s) enclose the COM")
            configs.extend(evaluated)
        return configs, counts, skipped

    def find_config(self, config_id: str) -> SupportConfig:
        """
        Configuration by id, re-running the filters.

        Raises:
            UnknownIdError: If the id is not produced by this configuration
        """
        configs, _, _ = self.configurations(self.filter())
        for config in configs:
            if config.config_id == config_id:
                return config
        raise UnknownIdError(f"Unknown configuration id {config_id!r}")

    def sweep_config(
        self, config: SupportConfig, screws: Sequence[ScrewSpec]
    ) -> Dict[str, SweepResult]:
        """Press sweeps of one configuration for every screw (empty if unusable)."""
        if not config.com_inside:
            return {}
        sweep = self.config.settings["sweep"]
        engine = self.engine
        results: Dict[str, SweepResult] = {}
        try:
            for screw in screws:
                problem = engine.problem(config.positions, config.normals, screw)
                results[screw.id] = engine.sweep(
                    problem, float(sweep["start"]), float(sweep["end"]), float(sweep["step"])
                )
        except DegenerateGeometryError as e:
            logger.debug(f"{config.config_id}: {e}")
            return {}
        return results

    def plan(self, output_dir: Optional[Path] = None) -> PlanOutcome:
        """
        Run the whole pipeline and, if ``output_dir`` is given, write every artifact.

        Returns:
            PlanOutcome; ``has_feasible`` decides the exit status
        """
        mesh, mass = self.mesh, self.mass
        pipeline = self.filter()
        configs, hull_counts, skipped = self.configurations(pipeline)
        screws = self.screws()

        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            sweeps = list(pool.map(lambda c: self.sweep_config(c, screws), configs))
        by_id = {c.config_id: s for c, s in zip(configs, sweeps)}

        ranked = rank_configs(
            configs, by_id, bool(self.config.settings["planner"]["prefer_fewest_modules"])
        )
        feasible = len(ranked.feasible)
        if feasible:
            logger.info(f"{feasible} configuration(s) stay within the suction limit")
        else:
            logger.warning("No configuration stays within the suction limit")

        table = self.force_table(ranked, screws)
        checks = self.press_checks(ranked, screws)
        report = PlanReport(
            mesh=self._mesh_summary(mesh, mass),
            stage_counts={s.value: len(pipeline.stages.get(s, [])) for s in STAGE_ORDER},
            first_empty=pipeline.first_empty.value if pipeline.first_empty else None,
            hull_counts=hull_counts,
            skipped_arities=skipped,
            ranking=[_ranking_row(e) for e in ranked.entries],
            screws=self._screw_verdicts(ranked, screws),
            press_checks=checks,
            provenance={"config_hash": self.config.config_hash(), "tool_version": __version__},
        )
        outcome = PlanOutcome(pipeline=pipeline, ranked=ranked, force_table=table, report=report)
        if output_dir is not None:
            self.write_artifacts(outcome, Path(output_dir))
        return outcome

    def force_table(self, ranked: RankedPlan, screws: Sequence[ScrewSpec]) -> ForceTable:
        """Forces of the best 2P and 3P configurations at the table press."""

        def entry(arity: int) -> Optional[Tuple[str, np.ndarray, Optional[np.ndarray]]]:
            best = ranked.best(arity)
            if best is None:
                return None
            return best.config.config_id, best.config.positions, best.config.normals

        press = float(self.config.settings["sweep"]["table_press"])
        return screw_force_table(entry(2), entry(3), screws, press, self.engine)

    def press_checks(
        self, ranked: RankedPlan, screws: Sequence[ScrewSpec]
    ) -> Dict[str, Dict[str, Dict[str, bool]]]:
        """Verdicts of the best configuration of each arity at the check levels."""
        levels = [float(v) for v in self.config.settings["sweep"]["check_levels"]]
        engine = self.engine
        checks: Dict[str, Dict[str, Dict[str, bool]]] = {}
        for arity in (2, 3):
            best = ranked.best(arity)
            if best is None:
                continue
            per_screw: Dict[str, Dict[str, bool]] = {}
            for screw in screws:
                problem = engine.problem(best.config.positions, best.config.normals, screw)
                results = engine.press_checks(problem, levels)
                per_screw[screw.id] = {f"{lvl:g}": r.feasible for lvl, r in results.items()}
            checks[best.config.config_id] = per_screw
        return checks

    def analyze(
        self,
        screw_id: str,
        press: float,
        config_id: Optional[str] = None,
        contacts: Optional[np.ndarray] = None,
    ) -> Tuple[np.ndarray, EquilibriumResult]:
        """
        Solve one configuration under one screw at one press level.

        Returns:
            (contact positions, result)
        """
        positions, normals = self._contacts(config_id, contacts)
        engine = self.engine
        problem = engine.problem(positions, normals, self.screw(screw_id).with_press(press))
        return positions, engine.solve(problem)

    def sweep(
        self,
        screw_id: str,
        config_id: Optional[str] = None,
        contacts: Optional[np.ndarray] = None,
    ) -> Tuple[np.ndarray, SweepResult]:
        """Press sweep of one configuration under one screw."""
        positions, normals = self._contacts(config_id, contacts)
        sweep = self.config.settings["sweep"]
        engine = self.engine
        problem = engine.problem(positions, normals, self.screw(screw_id))
        return positions, engine.sweep(
            problem, float(sweep["start"]), float(sweep["end"]), float(sweep["step"])
        )

    def write_artifacts(self, outcome: PlanOutcome, output_dir: Path) -> List[str]:
        """Write every plan artifact and record their names on the report."""
        output_dir.mkdir(parents=True, exist_ok=True)
        names: List[str] = []
        for stage in STAGE_ORDER:
            points = outcome.pipeline.stages.get(stage)
            if points is None:
                continue
            artifacts.write_stage_csv(points, output_dir / f"stage_{stage.value}.csv")
            artifacts.write_stage_ply(points, output_dir / f"stage_{stage.value}.ply")
            names += [f"stage_{stage.value}.csv", f"stage_{stage.value}.ply"]
        artifacts.write_rejections_csv(outcome.pipeline, output_dir / "rejections.csv")
        artifacts.write_json(configs_to_records(outcome.ranked), output_dir / "configs.json")
        artifacts.write_force_table(
            outcome.force_table, output_dir / "force_table.json", output_dir / "force_table.txt"
        )
        rows = [
            (e.config.config_id, screw_id, sweep)
            for e in outcome.ranked.entries
            for screw_id, sweep in e.sweeps.items()
        ]
        artifacts.write_sweeps_csv(rows, output_dir / "sweeps.csv")
        names += [
            "rejections.csv",
            "configs.json",
            "force_table.json",
            "force_table.txt",
            "sweeps.csv",
            "report.json",
        ]
        outcome.report.artifacts = names
        artifacts.write_json(outcome.report.to_dict(), output_dir / "report.json")
        logger.info(f"Wrote {len(names)} artifact(s) to {output_dir}")
        return names

    def _contacts(
        self, config_id: Optional[str], contacts: Optional[np.ndarray]
    ) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        if config_id is not None:
            config = self.find_config(config_id)
            return config.positions, config.normals
        if contacts is None:
            raise ValueError("Either a configuration id or contacts are required")
        return np.asarray(contacts, dtype=np.float64).reshape(-1, 3), None

    def _mesh_summary(self, mesh: TriMesh, mass: MassProperties) -> Dict[str, Any]:
        lo, hi = mesh.bbox
        return {
            "name": mesh.name,
            "triangles": mesh.n_triangles,
            "degenerate_dropped": mesh.degenerate_count,
            "watertight": mesh.watertight,
            "bbox_min_mm": lo.tolist(),
            "bbox_max_mm": hi.tolist(),
            "volume_mm3": mass.volume,
            "mass_kg": mass.mass,
            "com_mm": mass.com.tolist(),
        }

    def _screw_verdicts(
        self, ranked: RankedPlan, screws: Sequence[ScrewSpec]
    ) -> List[Dict[str, Any]]:
        verdicts = []
        for screw in self.config.screws() or screws:
            row: Dict[str, Any] = {"screw_id": screw.id, "excluded": screw.exclude}
            if not screw.exclude:
                for arity in (2, 3):
                    best = ranked.best(arity)
                    sweep = best.sweeps.get(screw.id) if best else None
                    row[f"{arity}P"] = (
                        None
                        if sweep is None
                        else {
                            "config_id": best.config.config_id,  # type: ignore[union-attr]
                            "stable": sweep.stable,
                            "critical_press_N": sweep.critical_press,
                            "worst_suction_demand_N": sweep.worst_suction_demand,
                        }
                    )
            verdicts.append(row)
        return verdicts


def _ranking_row(entry: Any) -> Dict[str, Any]:
    score = entry.score
    critical = [s.critical_press for s in entry.sweeps.values() if s.critical_press is not None]
    return {
        "rank": entry.rank,
        "config_id": entry.config.config_id,
        "feasible": score.feasible,
        "com_inside": entry.config.com_inside,
        "worst_suction_demand_N": score.worst_suction_demand,
        "margin_mm": score.margin,
        "area_mm2": score.area,
        "critical_press_N": min(critical) if critical else None,
    }
