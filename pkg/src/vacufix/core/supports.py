"""Support configurations: grid partition, 2P/3P enumeration and the footprint hull test."""

import logging
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist, squareform
from shapely.geometry import LineString, Point, Polygon

from vacufix.core.candidates import SamplePoint, StageSet
from vacufix.core.errors import TooFewCandidatesError
from vacufix.core.statics import SweepResult

logger = logging.getLogger(__name__)

HULL_EPSILON = 1e-6  # mm
DEFAULT_SPACING = 60.0  # mm
DEFAULT_SAMPLES = 16


@dataclass(frozen=True, eq=False)
class GridPartition:
    """Square cells of side spacing_d/√2; at most one support per cell."""

    points: StageSet
    spacing_d: float
    cell_side: float
    origin: np.ndarray
    cells: Dict[Tuple[int, int], List[int]]
    representatives: Dict[Tuple[int, int], int]

    def representative_points(self) -> List[int]:
        """Representative indices in cell order."""
        return [self.representatives[c] for c in sorted(self.representatives)]


@dataclass(frozen=True, eq=False)
class SupportConfig:
    """Two or three contacts and their footprint-hull verdict."""

    config_id: str
    contacts: List[SamplePoint]
    footprint_radius: float
    hull_vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    com_inside: bool = False
    margin: float = float("nan")

    @property
    def arity(self) -> int:
        """Number of contacts."""
        return len(self.contacts)

    @property
    def positions(self) -> np.ndarray:
        """(n, 3) contact positions."""
        return np.array([c.position for c in self.contacts])

    @property
    def normals(self) -> np.ndarray:
        """(n, 3) contact normals."""
        return np.array([c.normal for c in self.contacts])

    @property
    def area(self) -> float:
        """Footprint hull area (mm²)."""
        if len(self.hull_vertices) < 3:
            return 0.0
        return float(Polygon(self.hull_vertices).area)

    def sort_key(self) -> Tuple[float, ...]:
        """Contacts' coordinates, used as the final tie-break."""
        return tuple(float(x) for p in sorted(map(tuple, self.positions)) for x in p)


def partition_grid(points: StageSet, spacing_d: float = DEFAULT_SPACING) -> GridPartition:
    """
    Bin points into cells whose diagonal equals ``spacing_d``.

    Each non-empty cell is represented by the member closest to the cell
    centre; ties go to the lexicographically smallest position.
    """
    if not spacing_d > 0:
        raise ValueError(f"spacing_d must be > 0, got {spacing_d}")
    side = spacing_d / np.sqrt(2.0)
    xy = points.positions[:, :2]
    origin = xy.min(axis=0) if len(xy) else np.zeros(2)
    index = np.floor((xy - origin) / side).astype(np.int64)

    cells: Dict[Tuple[int, int], List[int]] = {}
    for i, (cx, cy) in enumerate(index):
        cells.setdefault((int(cx), int(cy)), []).append(i)

    representatives: Dict[Tuple[int, int], int] = {}
    for cell, members in cells.items():
        centre = origin + (np.array(cell) + 0.5) * side
        representatives[cell] = min(
            members,
            key=lambda m: (
                float(np.sum((xy[m] - centre) ** 2)),
                *map(float, points.positions[m]),
            ),
        )

    logger.info(f"Partitioned {len(points)} points into {len(cells)} cells of {side:.2f} mm")
    return GridPartition(
        points=points,
        spacing_d=float(spacing_d),
        cell_side=float(side),
        origin=origin,
        cells=cells,
        representatives=representatives,
    )


def min_interior_angle(xy: np.ndarray) -> float:
    """Smallest interior angle (degrees) of a planar triangle."""
    angles = []
    for k in range(3):
        u = xy[(k + 1) % 3] - xy[k]
        v = xy[(k + 2) % 3] - xy[k]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            return 0.0
        angles.append(np.degrees(np.arccos(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))))
    return float(min(angles))


def enumerate_configs(
    partition: GridPartition,
    arity: int,
    spacing_d: Optional[float] = None,
    footprint_radius: float = 8.7,
    one_per_cell: bool = True,
    enforce_spacing: bool = True,
    collinear_deg: float = 1.0,
) -> List[SupportConfig]:
    """
    All ``arity``-point support configurations drawn from the partition.

    Args:
        partition: Grid partition of the P4 points
        arity: 2 or 3
        spacing_d: Minimum pairwise planar distance (defaults to the partition's)
        footprint_radius: Suction footprint radius stored on each config (mm)
        one_per_cell: Draw contacts from cell representatives only
        enforce_spacing: Require pairwise distance >= spacing_d
        collinear_deg: 3P triangles with a smaller interior angle are skipped

    Returns:
        Configs with ids ``<arity>P-<nnnn>`` in enumeration order

    Raises:
        TooFewCandidatesError: If fewer than ``arity`` candidates exist
    """
    if arity not in (2, 3):
        raise ValueError(f"arity must be 2 or 3, got {arity}")
    spacing = partition.spacing_d if spacing_d is None else float(spacing_d)
    points = partition.points
    if one_per_cell:
        candidates = partition.representative_points()
    else:
        candidates = list(range(len(points)))
    if len(candidates) < arity:
        raise TooFewCandidatesError(
            f"{arity}P needs {arity} candidates, only {len(candidates)} available"
        )

    xy = points.positions[candidates, :2]
    if len(candidates) > 1:
        distance = squareform(pdist(xy))
    else:
        distance = np.zeros((1, 1))
    allowed = distance >= spacing - 1e-9 if enforce_spacing else np.ones_like(distance, bool)

    configs: List[SupportConfig] = []
    for combo in combinations(range(len(candidates)), arity):
        if not all(allowed[a, b] for a, b in combinations(combo, 2)):
            continue
        if arity == 3 and min_interior_angle(xy[list(combo)]) < collinear_deg:
            continue
        configs.append(
            SupportConfig(
                config_id=f"{arity}P-{len(configs):04d}",
                contacts=[points.point(candidates[k]) for k in combo],
                footprint_radius=footprint_radius,
            )
        )
    logger.info(
        f"Enumerated {len(configs)} {arity}P configuration(s) from {len(candidates)} candidates"
    )
    return configs


def footprint_hull(
    contacts_xy: np.ndarray, radius: float, samples_per_circle: int = DEFAULT_SAMPLES
) -> np.ndarray:
    """
    Convex hull of the suction footprints around each contact, counter-clockwise.

    Every circle is sampled ``samples_per_circle`` times starting from the
    normal of the first contact baseline, so two samples per circle give
    the offsets p ± r·n of that baseline.

    Args:
        contacts_xy: (n, 2) contact positions
        radius: Footprint radius (mm)
        samples_per_circle: Points per circle (>= 2)

    Returns:
        (h, 2) hull vertices
    """
    if samples_per_circle < 2:
        raise ValueError(f"samples_per_circle must be >= 2, got {samples_per_circle}")
    xy = np.asarray(contacts_xy, dtype=np.float64).reshape(-1, 2)
    phase = 0.0
    if len(xy) >= 2:
        u = xy[1] - xy[0]
        phase = float(np.arctan2(u[0], -u[1]))
    angles = phase + 2.0 * np.pi * np.arange(samples_per_circle) / samples_per_circle
    ring = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    cloud = (xy[:, None, :] + ring[None, :, :]).reshape(-1, 2)

    try:
        hull = ConvexHull(cloud)
    except QhullError:
        # collinear or coincident samples
        return np.unique(np.round(cloud, 12), axis=0)
    return cloud[hull.vertices]


def com_inclusion_test(hull_vertices: np.ndarray, com: Sequence[float]) -> Tuple[bool, float]:
    """
    Signed distance of the COM's XY projection to the footprint hull.

    Returns:
        (inside, margin); margin > 0 inside, and the boundary counts as outside
    """
    p = Point(float(com[0]), float(com[1]))
    vertices = np.asarray(hull_vertices, dtype=np.float64)
    if len(vertices) < 3:
        if len(vertices) == 0:
            return False, float("-inf")
        shape = LineString(vertices) if len(vertices) > 1 else Point(vertices[0])
        return False, -float(shape.distance(p))
    polygon = Polygon(vertices)
    distance = float(polygon.exterior.distance(p))
    margin = distance if polygon.contains(p) else -distance
    return margin > HULL_EPSILON, margin


def evaluate_config(
    config: SupportConfig, com: Sequence[float], samples_per_circle: int = DEFAULT_SAMPLES
) -> SupportConfig:
    """Fill in the footprint hull and the COM verdict."""
    hull = footprint_hull(config.positions[:, :2], config.footprint_radius, samples_per_circle)
    inside, margin = com_inclusion_test(hull, com)
    return replace(config, hull_vertices=hull, com_inside=inside, margin=margin)


@dataclass(frozen=True)
class ConfigScore:
    """Ranking components of one configuration."""

    feasible: bool
    modules: int
    worst_suction_demand: float  # N
    margin: float  # mm
    area: float  # mm²


@dataclass(frozen=True, eq=False)
class RankedEntry:
    """A configuration with its score and 1-based rank."""

    rank: int
    config: SupportConfig
    score: ConfigScore
    sweeps: Dict[str, SweepResult] = field(default_factory=dict)


@dataclass
class RankedPlan:
    """Configurations in deterministic rank order."""

    entries: List[RankedEntry]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def configs(self) -> List[SupportConfig]:
        """Configs in rank order."""
        return [e.config for e in self.entries]

    @property
    def feasible(self) -> List[RankedEntry]:
        """Entries stable over the whole sweep."""
        return [e for e in self.entries if e.score.feasible]

    def best(self, arity: int) -> Optional[RankedEntry]:
        """Top-ranked entry of the given arity."""
        return next((e for e in self.entries if e.config.arity == arity), None)

    def find(self, config_id: str) -> Optional[RankedEntry]:
        """Entry by config id."""
        return next((e for e in self.entries if e.config.config_id == config_id), None)


def score_config(config: SupportConfig, sweeps: Dict[str, SweepResult]) -> ConfigScore:
    """Score a config from its per-screw sweeps; no sweep means infeasible."""
    if sweeps:
        worst = max(s.worst_suction_demand for s in sweeps.values())
        stable = all(s.stable for s in sweeps.values())
    else:
        worst = float("inf")
        stable = False
    return ConfigScore(
        feasible=bool(config.com_inside and stable),
        modules=config.arity,
        worst_suction_demand=float(worst),
        margin=float(config.margin),
        area=config.area,
    )


def rank_configs(
    configs: Sequence[SupportConfig],
    sweeps: Dict[str, Dict[str, SweepResult]],
    prefer_fewest_modules: bool = False,
) -> RankedPlan:
    """
    Sort configurations: feasible first, then (optionally) fewer modules,
    lower worst-case suction demand, larger margin, larger area, and
    finally contact coordinates.

    Args:
        configs: Evaluated configurations
        sweeps: config id → screw id → press sweep
        prefer_fewest_modules: Rank 2P ahead of 3P among feasible configs

    Returns:
        RankedPlan with 1-based ranks
    """
    scored = [(c, score_config(c, sweeps.get(c.config_id, {}))) for c in configs]

    def key(item: Tuple[SupportConfig, ConfigScore]) -> Tuple:
        config, score = item
        margin = score.margin if np.isfinite(score.margin) else float("-inf")
        return (
            not score.feasible,
            score.modules if prefer_fewest_modules else 0,
            score.worst_suction_demand,
            -margin,
            -score.area,
            config.sort_key(),
        )

    ordered = sorted(scored, key=key)
    return RankedPlan(
        entries=[
            RankedEntry(rank=i + 1, config=c, score=s, sweeps=sweeps.get(c.config_id, {}))
            for i, (c, s) in enumerate(ordered)
        ]
    )


def configs_to_records(plan: RankedPlan) -> List[Dict]:
    """JSON-ready records of every ranked configuration."""
    records = []
    for entry in plan.entries:
        config, score = entry.config, entry.score
        records.append(
            {
                "config_id": config.config_id,
                "rank": entry.rank,
                "arity": config.arity,
                "contacts_mm": config.positions.tolist(),
                "normals": config.normals.tolist(),
                "point_ids": [c.point_id for c in config.contacts],
                "footprint_radius_mm": config.footprint_radius,
                "hull_vertices_mm": np.asarray(config.hull_vertices).tolist(),
                "com_inside": config.com_inside,
                "margin_mm": config.margin,
                "area_mm2": score.area,
                "worst_suction_demand_N": score.worst_suction_demand,
                "feasible": score.feasible,
                "critical_press_N": {
                    screw_id: sweep.critical_press for screw_id, sweep in entry.sweeps.items()
                },
            }
        )
    return records
