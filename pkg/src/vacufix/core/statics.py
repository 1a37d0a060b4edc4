"""Static equilibrium of a part held by two or three balloon modules.

Sign convention: a balloon pushes the part along the contact normal ``n_j``
(flipped to point up, into the part). Column j of A is the object-side normal
``-n_j`` stacked over its moment ``r_j × -n_j`` about the centre of mass, and
b is the external wrench (gravity plus screwdriver press). A solution F of
A·F = b therefore has positive entries for push forces and negative entries
for suction demand.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from vacufix.core.errors import ConfigError, DegenerateGeometryError

logger = logging.getLogger(__name__)

MM_PER_M = 1000.0
DEFAULT_MOMENT_WEIGHT = 1000.0
RESIDUAL_RTOL = 1e-6
COLLINEAR_TOL = 1e-9
DOWN = (0.0, 0.0, -1.0)


@dataclass(frozen=True, eq=False)
class ScrewSpec:
    """A screw to be removed and the press its driver applies."""

    id: str
    position: np.ndarray
    axis: np.ndarray = field(default_factory=lambda: np.array(DOWN))
    press_force: float = 0.0
    exclude: bool = False

    def __post_init__(self) -> None:
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        length = float(np.linalg.norm(axis))
        if length == 0.0:
            raise ConfigError(f"screw {self.id}: axis must be non-zero", "screws.axis")
        if self.press_force < 0:
            raise ConfigError(
                f"screw {self.id}: press_force must be >= 0, got {self.press_force}",
                "screws.press_force",
            )
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "axis", axis / length)

    def with_press(self, press_force: float) -> "ScrewSpec":
        """Same screw at another press level."""
        return replace(self, press_force=float(press_force))


@dataclass(frozen=True)
class SuctionLimits:
    """Per-balloon suction capacity."""

    f_max: float = 5.7  # N

    def __post_init__(self) -> None:
        if not self.f_max > 0:
            raise ConfigError(f"must be > 0, got {self.f_max}", "statics.f_max")


@dataclass(frozen=True, eq=False)
class EquilibriumProblem:
    """One support configuration under one screw load."""

    contacts: np.ndarray  # (n, 3) mm
    normals: np.ndarray  # (n, 3) unit, z > 0
    com: np.ndarray  # mm
    mass: float  # kg
    gravity: float  # m/s²
    screw: ScrewSpec
    char_length: float = 1.0  # mm
    include_press_moment: bool = True

    def __post_init__(self) -> None:
        contacts = np.asarray(self.contacts, dtype=np.float64).reshape(-1, 3)
        normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(contacts) not in (2, 3):
            raise ValueError(f"Need 2 or 3 contacts, got {len(contacts)}")
        if normals.shape != contacts.shape:
            raise ValueError("One normal per contact is required")
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
        if (normals[:, 2] <= 0).any():
            raise ValueError("Contact normals must point upward (n·z > 0)")
        object.__setattr__(self, "contacts", contacts)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "com", np.asarray(self.com, dtype=np.float64).reshape(3))

    @property
    def weight(self) -> float:
        """mg (N)."""
        return self.mass * self.gravity

    @property
    def load_scale(self) -> float:
        """mg + f_press, the scale of the residual tolerance."""
        return self.weight + self.screw.press_force

    def with_press(self, press_force: float) -> "EquilibriumProblem":
        """Same problem at another press level."""
        return replace(self, screw=self.screw.with_press(press_force))


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    """Solved contact forces and their classification."""

    forces: np.ndarray
    residual: float
    feasible: bool
    limiting_contact: int
    press: float
    within_tolerance: bool = True

    @property
    def min_force(self) -> float:
        """Smallest signed contact force (N)."""
        return float(self.forces.min())

    @property
    def suction_demand(self) -> float:
        """Largest suction any balloon must supply (N, >= 0)."""
        return max(0.0, -self.min_force)


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Equilibria over increasing press levels."""

    press_levels: np.ndarray
    results: List[EquilibriumResult]
    critical_press: Optional[float]

    @property
    def trajectories(self) -> np.ndarray:
        """(levels, contacts) signed forces."""
        return np.array([r.forces for r in self.results])

    @property
    def stable(self) -> bool:
        """True if no level failed."""
        return self.critical_press is None

    @property
    def worst_suction_demand(self) -> float:
        """Largest suction demand over all levels (N)."""
        return max((r.suction_demand for r in self.results), default=0.0)


def assemble_system(problem: EquilibriumProblem) -> Tuple[np.ndarray, np.ndarray]:
    """
    Build the 6×n equilibrium matrix and the external wrench.

    Moment arms are taken about the centre of mass and converted to metres.

    Args:
        problem: Contacts, normals, mass properties and screw load

    Returns:
        (A, b) with force rows first and moment rows (N·m) last

    Raises:
        DegenerateGeometryError: If three contacts are collinear in XY
    """
    _check_geometry(problem.contacts)
    arms = (problem.contacts - problem.com) / MM_PER_M
    push = -problem.normals
    A = np.vstack([push.T, np.cross(arms, push).T])

    screw = problem.screw
    press = screw.press_force * screw.axis
    moment = np.zeros(3)
    if problem.include_press_moment:
        moment = np.cross((screw.position - problem.com) / MM_PER_M, press)
    force = np.array([0.0, 0.0, -problem.weight]) + press
    return A, np.concatenate([force, moment])


def solve_equilibrium(
    A: np.ndarray,
    b: np.ndarray,
    char_length: float,
    load_scale: float,
    moment_weight: float = DEFAULT_MOMENT_WEIGHT,
    limits: Optional[SuctionLimits] = None,
    press: float = 0.0,
) -> EquilibriumResult:
    """
    Minimum-norm least-squares contact forces.

    Moment rows are scaled by ``moment_weight`` before solving (1000 turns
    N·m into N·mm). The residual reports moments in N·mm divided by
    ``char_length`` so every component is in newtons.

    Args:
        A: 6×n equilibrium matrix
        b: External wrench
        char_length: Characteristic part length (mm), usually the bbox diagonal
        load_scale: mg + f_press (N); tolerance is 1e-6 of it
        moment_weight: Row weight of the moment equations
        limits: Suction limit per balloon
        press: Press level recorded on the result

    Returns:
        EquilibriumResult; infeasibility is reported, never raised
    """
    limits = limits or SuctionLimits()
    weights = np.array([1.0, 1.0, 1.0, moment_weight, moment_weight, moment_weight])
    forces, *_ = np.linalg.lstsq(A * weights[:, None], b * weights, rcond=None)

    mismatch = A @ forces - b
    mismatch[3:] *= MM_PER_M / max(char_length, 1e-12)
    residual = float(np.linalg.norm(mismatch))
    within = residual <= RESIDUAL_RTOL * max(load_scale, 1e-12)
    feasible = bool(within and forces.min() >= -limits.f_max)
    return EquilibriumResult(
        forces=forces,
        residual=residual,
        feasible=feasible,
        limiting_contact=int(np.argmin(forces)),
        press=float(press),
        within_tolerance=bool(within),
    )


def check_suction_feasibility(result: EquilibriumResult, limits: SuctionLimits) -> bool:
    """Every balloon stays above −f_max and the balance holds within tolerance."""
    return bool(result.within_tolerance and result.forces.min() >= -limits.f_max)


def solve_problem(
    problem: EquilibriumProblem,
    limits: Optional[SuctionLimits] = None,
    moment_weight: float = DEFAULT_MOMENT_WEIGHT,
) -> EquilibriumResult:
    """Assemble and solve one problem."""
    A, b = assemble_system(problem)
    return solve_equilibrium(
        A,
        b,
        problem.char_length,
        problem.load_scale,
        moment_weight,
        limits,
        problem.screw.press_force,
    )


def press_levels(f_start: float, f_end: float, step: float) -> np.ndarray:
    """Strictly increasing levels f_start, f_start + step, ... up to f_end."""
    if step <= 0:
        raise ConfigError(f"must be > 0, got {step}", "sweep.step")
    if f_start < 0:
        raise ConfigError(f"must be >= 0, got {f_start}", "sweep.start")
    if f_end < f_start:
        raise ConfigError(f"end {f_end} is below start {f_start}", "sweep.end")
    count = int(np.floor((f_end - f_start) / step + 1e-9))
    return np.round(f_start + step * np.arange(count + 1), 12)


def sweep_press_force(
    problem: EquilibriumProblem,
    f_start: float = 0.0,
    f_end: float = 18.0,
    step: float = 0.5,
    limits: Optional[SuctionLimits] = None,
    moment_weight: float = DEFAULT_MOMENT_WEIGHT,
) -> SweepResult:
    """
    Solve ``problem`` at every press level and find the first failing one.

    Raises:
        DegenerateGeometryError: If the contacts are collinear
    """
    levels = press_levels(f_start, f_end, step)
    results = [
        solve_problem(problem.with_press(level), limits, moment_weight) for level in levels
    ]
    critical = next((float(r.press) for r in results if not r.feasible), None)
    return SweepResult(press_levels=levels, results=results, critical_press=critical)


@dataclass(frozen=True)
class StaticsSettings:
    """Statics options shared by every solve of a run."""

    f_max: float = 5.7
    gravity: float = 9.81
    omit_press_moment: bool = False
    vertical_normals: bool = False
    moment_weight: float = DEFAULT_MOMENT_WEIGHT

    def __post_init__(self) -> None:
        if not self.f_max > 0:
            raise ConfigError(f"must be > 0, got {self.f_max}", "statics.f_max")
        if not self.gravity > 0:
            raise ConfigError(f"must be > 0, got {self.gravity}", "statics.gravity")
        if not self.moment_weight > 0:
            raise ConfigError(f"must be > 0, got {self.moment_weight}", "statics.moment_weight")

    @property
    def limits(self) -> SuctionLimits:
        """SuctionLimits view."""
        return SuctionLimits(self.f_max)


class StaticsEngine:
    """Builds and solves equilibrium problems for one part."""

    def __init__(
        self, com: Sequence[float], mass: float, char_length: float, settings: StaticsSettings
    ):
        """
        Initialize the engine.

        Args:
            com: Centre of mass (mm)
            mass: Part mass (kg)
            char_length: Characteristic length for the residual (mm)
            settings: Statics options
        """
        self.com = np.asarray(com, dtype=np.float64)
        self.mass = float(mass)
        self.char_length = float(char_length)
        self.settings = settings

    def problem(
        self, contacts: np.ndarray, normals: Optional[np.ndarray], screw: ScrewSpec
    ) -> EquilibriumProblem:
        """Problem for the given contacts; normals default to +Z."""
        contacts = np.asarray(contacts, dtype=np.float64).reshape(-1, 3)
        if normals is None or self.settings.vertical_normals:
            normals = np.tile([0.0, 0.0, 1.0], (len(contacts), 1))
        return EquilibriumProblem(
            contacts=contacts,
            normals=normals,
            com=self.com,
            mass=self.mass,
            gravity=self.settings.gravity,
            screw=screw,
            char_length=self.char_length,
            include_press_moment=not self.settings.omit_press_moment,
        )

    def solve(self, problem: EquilibriumProblem) -> EquilibriumResult:
        """Solve one problem."""
        return solve_problem(problem, self.settings.limits, self.settings.moment_weight)

    def sweep(
        self, problem: EquilibriumProblem, f_start: float, f_end: float, step: float
    ) -> SweepResult:
        """Press sweep of one problem."""
        result = sweep_press_force(
            problem, f_start, f_end, step, self.settings.limits, self.settings.moment_weight
        )
        if result.critical_press is not None:
            logger.debug(
                f"Screw {problem.screw.id}: suction limit exceeded at {result.critical_press} N"
            )
        return result

    def press_checks(
        self, problem: EquilibriumProblem, levels: Sequence[float]
    ) -> Dict[float, EquilibriumResult]:
        """Solve at each check level (e.g. 18 N and 25 N)."""
        return {float(level): self.solve(problem.with_press(level)) for level in levels}


@dataclass
class ForceTableRow:
    """Forces of one screw under the 2P and 3P configurations."""

    screw_id: str
    results: Dict[str, Optional[EquilibriumResult]]


@dataclass
class ForceTable:
    """Per-screw signed balloon forces at a stated press level."""

    press: float
    f_max: float
    config_ids: Dict[str, Optional[str]]
    rows: List[ForceTableRow]

    def to_records(self) -> List[Dict]:
        """JSON-ready rows."""
        records = []
        for row in self.rows:
            record: Dict = {"screw_id": row.screw_id}
            for arity, result in row.results.items():
                if result is None:
                    record[arity] = None
                    continue
                record[arity] = {
                    "config_id": self.config_ids.get(arity),
                    "forces_N": [float(f) for f in result.forces],
                    "suction": [bool(f < 0) for f in result.forces],
                    "feasible": result.feasible,
                }
            records.append(record)
        return records


def screw_force_table(
    contacts_2p: Optional[Tuple[str, np.ndarray, Optional[np.ndarray]]],
    contacts_3p: Optional[Tuple[str, np.ndarray, Optional[np.ndarray]]],
    screws: Sequence[ScrewSpec],
    press: float,
    engine: StaticsEngine,
) -> ForceTable:
    """
    Signed balloon forces of the best 2P and 3P configurations for each screw.

    Args:
        contacts_2p: (config id, contact positions, normals) or None
        contacts_3p: (config id, contact positions, normals) or None
        screws: Screws to tabulate; excluded screws are skipped
        press: Press level applied by every screw (N)
        engine: Statics engine of the part

    Returns:
        ForceTable with one row per analysed screw
    """
    configs = {"2P": contacts_2p, "3P": contacts_3p}
    rows = []
    for screw in screws:
        if screw.exclude:
            continue
        results: Dict[str, Optional[EquilibriumResult]] = {}
        for arity, entry in configs.items():
            if entry is None:
                results[arity] = None
                continue
            _, contacts, normals = entry
            problem = engine.problem(contacts, normals, screw.with_press(press))
            results[arity] = engine.solve(problem)
        rows.append(ForceTableRow(screw_id=screw.id, results=results))
    return ForceTable(
        press=float(press),
        f_max=engine.settings.f_max,
        config_ids={arity: entry[0] if entry else None for arity, entry in configs.items()},
        rows=rows,
    )


def press_checks(
    engine: StaticsEngine, problem: EquilibriumProblem, levels: Sequence[float] = (18.0, 25.0)
) -> Dict[float, bool]:
    """Feasibility verdict at each check level."""
    return {level: r.feasible for level, r in engine.press_checks(problem, levels).items()}


def _check_geometry(contacts: np.ndarray) -> None:
    xy = contacts[:, :2]
    if len(xy) == 2:
        if np.linalg.norm(xy[1] - xy[0]) <= COLLINEAR_TOL:
            raise DegenerateGeometryError("The two contacts coincide in XY")
        return
    e1 = xy[1] - xy[0]
    e2 = xy[2] - xy[0]
    twice_area = abs(e1[0] * e2[1] - e1[1] * e2[0])
    longest = max(np.sum(e1**2), np.sum(e2**2), np.sum((xy[2] - xy[1]) ** 2))
    if longest == 0.0 or twice_area / longest <= COLLINEAR_TOL:
        raise DegenerateGeometryError("Contacts are collinear; moment rows lose rank")
