"""Underside sampling and the staged support-candidate filters.

The stages form a chain P0 ⊇ P1 ⊇ P2 ⊇ Psupport ⊇ P3 ⊇ P4:

- P0: every +Z ray hit on a lattice below the part, with PCA normals
- P1: normal within ``theta_max`` of +Z
- P2: nothing of the part below the point
- Psupport: below the centre of mass
- P3: the suction ring seats on the surface
- P4: no height jump under the ring
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from tqdm import tqdm

from vacufix.core.errors import ConfigError, EmptyResultError, TooFewPointsError
from vacufix.core.mesh import TriMesh
from vacufix.core.raycast import PACKET_SIZE, cast_rays, occluded_mask, onto_facets
from vacufix.core.spatial import PlanarPointIndex

logger = logging.getLogger(__name__)

UP = np.array([0.0, 0.0, 1.0])
DOWN = np.array([0.0, 0.0, -1.0])
NORMAL_CHUNK = 4096


class Stage(str, Enum):
    """Filter stages in pipeline order."""

    P0 = "P0"
    P1 = "P1"
    P2 = "P2"
    PSUPPORT = "Psupport"
    P3 = "P3"
    P4 = "P4"

    @classmethod
    def parse(cls, value: str) -> "Stage":
        """Case-insensitive lookup by value."""
        if isinstance(value, cls):
            return value
        for stage in cls:
            if stage.value.lower() == str(value).lower():
                return stage
        raise ValueError(f"Unknown stage {value!r}; expected one of {[s.value for s in cls]}")


STAGE_ORDER: List[Stage] = list(Stage)


class RejectReason(str, Enum):
    """Why a filter removed a point."""

    INCLINATION = "inclination"
    OCCLUDED = "occluded"
    ABOVE_COM = "above_com"
    INCOMPLETE_CONTACT = "incomplete_contact"
    DISCONTINUOUS = "discontinuous"


@dataclass(frozen=True)
class FilterParams:
    """Sampling and filter parameters (mm, degrees)."""

    grid_pitch: float = 2.0
    knn_k: int = 50
    theta_max: float = 60.0
    ring_rays: int = 60
    suction_radius: float = 8.7
    coverage_tau: float = 0.9
    continuity_delta: float = 2.5
    ring_window: float = 5.0
    visibility_skip: float = 1e-3
    neighbor_source: Stage = Stage.PSUPPORT

    def __post_init__(self) -> None:
        for name in ("grid_pitch", "suction_radius", "continuity_delta", "ring_window"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be > 0, got {getattr(self, name)}", f"filter.{name}")
        for name in ("knn_k", "ring_rays"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"must be >= 1, got {getattr(self, name)}", f"filter.{name}")
        if not 0.0 < self.coverage_tau <= 1.0:
            raise ConfigError(f"must be in (0, 1], got {self.coverage_tau}", "filter.coverage_tau")
        if not 0.0 < self.theta_max < 90.0:
            raise ConfigError(f"must be in (0, 90), got {self.theta_max}", "filter.theta_max")
        if self.visibility_skip < 0:
            raise ConfigError(
                f"must be >= 0, got {self.visibility_skip}", "filter.visibility_skip"
            )
        try:
            source = Stage.parse(self.neighbor_source)
        except ValueError as e:
            raise ConfigError(str(e), "filter.neighbor_source") from e
        if source not in (Stage.PSUPPORT, Stage.P3):
            raise ConfigError("must be Psupport or P3", "filter.neighbor_source")
        object.__setattr__(self, "neighbor_source", source)


@dataclass(frozen=True, eq=False)
class SamplePoint:
    """One candidate support point."""

    position: np.ndarray
    normal: np.ndarray
    ray_cell: Tuple[int, int]
    hit_rank: int
    point_id: int


@dataclass(frozen=True, eq=False)
class StageSet:
    """Points surviving one stage, stored as parallel arrays.

    ``rejections`` lists only the points this stage removed from its input.
    """

    stage: Stage
    positions: np.ndarray
    normals: np.ndarray
    ray_cells: np.ndarray
    hit_ranks: np.ndarray
    point_ids: np.ndarray
    rejections: Dict[int, RejectReason] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(len(self.point_ids))

    def __iter__(self) -> Iterator[SamplePoint]:
        return (self.point(i) for i in range(len(self)))

    def point(self, i: int) -> SamplePoint:
        """The ``i``-th point as a SamplePoint."""
        return SamplePoint(
            position=self.positions[i].copy(),
            normal=self.normals[i].copy(),
            ray_cell=(int(self.ray_cells[i, 0]), int(self.ray_cells[i, 1])),
            hit_rank=int(self.hit_ranks[i]),
            point_id=int(self.point_ids[i]),
        )

    def select(
        self, keep: np.ndarray, stage: Stage, reason: Optional[RejectReason] = None
    ) -> "StageSet":
        """Subset by boolean mask, recording ``reason`` for the dropped points."""
        keep = np.asarray(keep, dtype=bool)
        rejections: Dict[int, RejectReason] = {}
        if reason is not None:
            rejections = {int(pid): reason for pid in self.point_ids[~keep]}
        return StageSet(
            stage=stage,
            positions=self.positions[keep],
            normals=self.normals[keep],
            ray_cells=self.ray_cells[keep],
            hit_ranks=self.hit_ranks[keep],
            point_ids=self.point_ids[keep],
            rejections=rejections,
        )

    def relabel(self, stage: Stage) -> "StageSet":
        """Same points under another stage tag, with no rejections."""
        return self.select(np.ones(len(self), dtype=bool), stage)

    def with_normals(self, normals: np.ndarray) -> "StageSet":
        """Copy with replaced normals."""
        return StageSet(
            self.stage,
            self.positions,
            np.asarray(normals, dtype=np.float64),
            self.ray_cells,
            self.hit_ranks,
            self.point_ids,
            dict(self.rejections),
        )

    def translated(self, offset: Sequence[float]) -> "StageSet":
        """Copy with every position moved by ``offset``."""
        return StageSet(
            self.stage,
            self.positions + np.asarray(offset, dtype=np.float64),
            self.normals,
            self.ray_cells,
            self.hit_ranks,
            self.point_ids,
            dict(self.rejections),
        )

    @classmethod
    def empty(cls, stage: Stage) -> "StageSet":
        """A stage with no points."""
        return cls(
            stage,
            np.zeros((0, 3)),
            np.zeros((0, 3)),
            np.zeros((0, 2), dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
        )


def sample_surface(mesh: TriMesh, params: FilterParams) -> StageSet:
    """
    Sample the part with +Z rays from a regular lattice below it.

    The lattice starts at the bbox minimum, extends one pitch beyond the bbox
    maximum, and rays start one pitch below the lowest vertex. Every merged hit
    becomes a point, with the facet normal flipped to z >= 0 until normals are
    estimated.

    Raises:
        EmptyResultError: If the part has no XY extent or no ray hits it
    """
    lo, hi = mesh.bbox
    pitch = params.grid_pitch
    if hi[0] - lo[0] <= 0 or hi[1] - lo[1] <= 0:
        raise EmptyResultError("Mesh has zero extent in X or Y; nothing to sample")

    nx = int(np.floor((hi[0] - lo[0]) / pitch)) + 2
    ny = int(np.floor((hi[1] - lo[1]) / pitch)) + 2
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cells = np.stack([ii.ravel(), jj.ravel()], axis=1)
    origins = np.column_stack(
        [
            lo[0] + pitch * cells[:, 0],
            lo[1] + pitch * cells[:, 1],
            np.full(len(cells), lo[2] - pitch),
        ]
    )

    hits = cast_rays(mesh, origins, UP)
    if not len(hits):
        raise EmptyResultError(f"No lattice ray hit {mesh.name or 'the mesh'}")

    positions = origins[hits.ray_ids] + hits.t[:, None] * UP
    normals = mesh.facet_normals[hits.triangle_ids].copy()
    normals[normals[:, 2] < 0] *= -1.0
    logger.info(f"Sampled {len(hits)} points from {nx}x{ny} rays (pitch {pitch} mm)")
    return StageSet(
        stage=Stage.P0,
        positions=positions,
        normals=normals,
        ray_cells=cells[hits.ray_ids],
        hit_ranks=hits.ranks(),
        point_ids=np.arange(len(hits)),
    )


def estimate_normals(
    points: StageSet, params: FilterParams, show_progress: bool = False
) -> StageSet:
    """
    Replace normals by the PCA normal of each point's 3-D neighbourhood.

    ``knn_k`` is clamped to the point count. The normal is the right singular
    vector of the smallest singular value of the centred neighbourhood,
    flipped so that z >= 0.

    Raises:
        TooFewPointsError: If fewer than 3 points are given
    """
    n = len(points)
    if n < 3:
        raise TooFewPointsError(f"Normal estimation needs at least 3 points, got {n}")
    k = max(3, min(int(params.knn_k), n))
    tree = cKDTree(points.positions)
    normals = np.empty((n, 3))

    chunks = range(0, n, NORMAL_CHUNK)
    for start in tqdm(chunks, desc="Estimating normals", unit="chunk", disable=not show_progress):
        block = points.positions[start : start + NORMAL_CHUNK]
        _, idx = tree.query(block, k=k)
        neighbourhoods = points.positions[idx]
        centred = neighbourhoods - neighbourhoods.mean(axis=1, keepdims=True)
        _, _, vt = np.linalg.svd(centred, full_matrices=False)
        normals[start : start + len(block)] = vt[:, -1, :]

    normals[normals[:, 2] < 0] *= -1.0
    return points.with_normals(normals)


def filter_inclination(points: StageSet, params: FilterParams) -> StageSet:
    """P1: keep points whose normal is within ``theta_max`` of +Z (boundary kept)."""
    angles = np.degrees(np.arccos(np.clip(points.normals[:, 2], -1.0, 1.0)))
    keep = angles <= params.theta_max + 1e-9
    return points.select(keep, Stage.P1, RejectReason.INCLINATION)


def filter_visibility(points: StageSet, mesh: TriMesh, params: FilterParams) -> StageSet:
    """P2: keep points from which a −Z ray leaves the part without another hit."""
    if not len(points):
        return points.select(np.zeros(0, dtype=bool), Stage.P2, RejectReason.OCCLUDED)
    # rays start just inside their own facet so they cannot graze a wall down to a rim
    origins = onto_facets(mesh, points.positions)
    occluded = occluded_mask(mesh, origins, DOWN, params.visibility_skip)
    return points.select(~occluded, Stage.P2, RejectReason.OCCLUDED)


def filter_below_com(points: StageSet, com: Sequence[float]) -> StageSet:
    """Psupport: keep points strictly below the centre of mass."""
    z_com = float(np.asarray(com, dtype=np.float64)[2])
    result = points.select(points.positions[:, 2] < z_com, Stage.PSUPPORT, RejectReason.ABOVE_COM)
    if len(points) and not len(result):
        logger.warning(f"No candidate lies below the centre of mass (z = {z_com:.6g} mm)")
    return result


def contact_coverage(
    points: StageSet, mesh: TriMesh, params: FilterParams, show_progress: bool = False
) -> np.ndarray:
    """
    Fraction of suction-ring rays that land on the surface around each point.

    ``ring_rays`` +Z rays start on the radius ``suction_radius`` circle at
    z_p − ring_window; a ray counts when its first hit lies within
    ``ring_window`` of z_p.
    """
    n = len(points)
    rays = int(params.ring_rays)
    angles = 2.0 * np.pi * np.arange(rays) / rays
    ring = params.suction_radius * np.column_stack(
        [np.cos(angles), np.sin(angles), np.zeros(rays)]
    )
    window = params.ring_window
    coverage = np.zeros(n)

    per_chunk = max(1, PACKET_SIZE // rays)
    chunks = range(0, n, per_chunk)
    for start in tqdm(chunks, desc="Checking contact", unit="chunk", disable=not show_progress):
        centres = points.positions[start : start + per_chunk]
        origins = (centres[:, None, :] + ring[None, :, :]).reshape(-1, 3)
        origins[:, 2] -= window
        t_first = cast_rays(mesh, origins, UP).first(len(origins))
        landed = np.nan_to_num(t_first, nan=np.inf) <= 2.0 * window
        coverage[start : start + len(centres)] = landed.reshape(-1, rays).mean(axis=1)
    return coverage


def filter_completeness(
    points: StageSet, mesh: TriMesh, params: FilterParams, show_progress: bool = False
) -> StageSet:
    """P3: keep points whose suction ring coverage reaches ``coverage_tau``."""
    coverage = contact_coverage(points, mesh, params, show_progress)
    keep = coverage >= params.coverage_tau - 1e-12
    return points.select(keep, Stage.P3, RejectReason.INCOMPLETE_CONTACT)


def filter_continuity(
    points: StageSet, neighbor_source: StageSet, params: FilterParams
) -> StageSet:
    """
    P4: keep points with no height jump under the suction cup.

    Every neighbour within ``suction_radius`` (planar) in ``neighbor_source``
    must lie within ``continuity_delta`` of the point's height.
    """
    if not len(points) or not len(neighbor_source):
        return points.select(np.ones(len(points), dtype=bool), Stage.P4)

    index = PlanarPointIndex(neighbor_source.positions)
    source_z = neighbor_source.positions[:, 2]
    neighbours = index.radius_many(points.positions, params.suction_radius)
    keep = np.array(
        [
            not nbrs.size or bool(np.all(np.abs(source_z[nbrs] - z) <= params.continuity_delta))
            for nbrs, z in zip(neighbours, points.positions[:, 2])
        ],
        dtype=bool,
    )
    return points.select(keep, Stage.P4, RejectReason.DISCONTINUOUS)


@dataclass
class PipelineResult:
    """Stage sets of one pipeline run plus diagnostics."""

    stages: Dict[Stage, StageSet]
    first_empty: Optional[Stage] = None

    def __getitem__(self, stage: Stage) -> StageSet:
        return self.stages[stage]

    @property
    def last(self) -> StageSet:
        """The last stage that was computed."""
        return self.stages[[s for s in STAGE_ORDER if s in self.stages][-1]]

    @property
    def counts(self) -> Dict[str, int]:
        """Point count per computed stage."""
        return {s.value: len(self.stages[s]) for s in STAGE_ORDER if s in self.stages}

    @property
    def rejections(self) -> Dict[int, Tuple[Stage, RejectReason]]:
        """Every removed point id with the stage that removed it and why."""
        merged: Dict[int, Tuple[Stage, RejectReason]] = {}
        for stage in STAGE_ORDER:
            if stage in self.stages:
                for pid, reason in self.stages[stage].rejections.items():
                    merged[pid] = (stage, reason)
        return merged


class CandidateFilter:
    """Runs sampling and the filter stages for one part."""

    def __init__(self, params: FilterParams, show_progress: bool = False):
        """
        Initialize the filter pipeline.

        Args:
            params: Sampling and filter parameters
            show_progress: Show progress bars during the per-point stages
        """
        self.params = params
        self.show_progress = show_progress

    def run(
        self, mesh: TriMesh, com: Sequence[float], stop_at: Optional[Stage] = None
    ) -> PipelineResult:
        """
        Run every stage in order, optionally stopping after ``stop_at``.

        Once a stage comes out empty the remaining requested stages are
        recorded as empty and ``first_empty`` names it.
        """
        params = self.params
        last = STAGE_ORDER.index(stop_at) if stop_at is not None else len(STAGE_ORDER) - 1
        stages: Dict[Stage, StageSet] = {}

        p0 = estimate_normals(sample_surface(mesh, params), params, self.show_progress)
        stages[Stage.P0] = p0
        steps = [
            (Stage.P1, lambda s: filter_inclination(s, params)),
            (Stage.P2, lambda s: filter_visibility(s, mesh, params)),
            (Stage.PSUPPORT, lambda s: filter_below_com(s, com)),
            (Stage.P3, lambda s: filter_completeness(s, mesh, params, self.show_progress)),
            (Stage.P4, lambda s: filter_continuity(s, self._neighbours(stages), params)),
        ]

        current = p0
        first_empty: Optional[Stage] = None
        for stage, step in steps[:last]:
            if first_empty is not None:
                stages[stage] = StageSet.empty(stage)
                continue
            current = step(current)
            stages[stage] = current
            logger.info(f"{stage.value}: {len(current)} point(s)")
            if not len(current):
                first_empty = stage
                logger.warning(f"Stage {stage.value} is empty; later stages are skipped")

        return PipelineResult(stages=stages, first_empty=first_empty)

    def _neighbours(self, stages: Dict[Stage, StageSet]) -> StageSet:
        return stages[self.params.neighbor_source]


def run_pipeline(
    mesh: TriMesh,
    params: FilterParams,
    com: Sequence[float],
    stop_at: Optional[Stage] = None,
    show_progress: bool = False,
) -> PipelineResult:
    """Sample and filter ``mesh`` through P4 (or ``stop_at``)."""
    return CandidateFilter(params, show_progress).run(mesh, com, stop_at)
