"""Ray casting against a TriMesh through a bounding-volume hierarchy.

Rays are traced in packets: each BVH node is tested against every ray of the
packet that reached it at once, and leaves run a vectorized Möller–Trumbore
test over (rays × triangles).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from vacufix.core.mesh import TriMesh

logger = logging.getLogger(__name__)

LEAF_SIZE = 8
PACKET_SIZE = 8192
BOX_PAD = 1e-6  # mm
BARYCENTRIC_EPS = 1e-9
MERGE_TOLERANCE = 1e-6  # mm
DEFAULT_SKIP = 1e-3  # mm


@dataclass(frozen=True, eq=False)
class Ray:
    """Half-line origin + t·direction, t ≥ 0."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise ValueError(f"Ray direction must be a unit vector, got {direction}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)

    @classmethod
    def toward(cls, origin: Sequence[float], direction: Sequence[float]) -> "Ray":
        """Build a ray, normalizing ``direction``."""
        d = np.asarray(direction, dtype=np.float64)
        return cls(np.asarray(origin, dtype=np.float64), d / np.linalg.norm(d))


@dataclass(frozen=True, eq=False)
class HitRecord:
    """One ray–surface intersection."""

    t: float
    point: np.ndarray
    triangle_id: int
    facet_normal: np.ndarray


@dataclass(frozen=True, eq=False)
class RayHits:
    """Merged hits of a ray batch, sorted by (ray, t)."""

    ray_ids: np.ndarray
    t: np.ndarray
    triangle_ids: np.ndarray

    def __len__(self) -> int:
        return int(len(self.t))

    def counts(self, n_rays: int) -> np.ndarray:
        """Number of hits per ray."""
        return np.bincount(self.ray_ids, minlength=n_rays)

    def first(self, n_rays: int) -> np.ndarray:
        """Distance of the first hit per ray (NaN on a miss)."""
        first_t = np.full(n_rays, np.nan)
        is_first = self._is_first()
        first_t[self.ray_ids[is_first]] = self.t[is_first]
        return first_t

    def first_triangles(self, n_rays: int) -> np.ndarray:
        """Triangle of the first hit per ray (-1 on a miss)."""
        first_tri = np.full(n_rays, -1, dtype=np.int64)
        is_first = self._is_first()
        first_tri[self.ray_ids[is_first]] = self.triangle_ids[is_first]
        return first_tri

    def _is_first(self) -> np.ndarray:
        is_first = np.ones(len(self.t), dtype=bool)
        is_first[1:] = self.ray_ids[1:] != self.ray_ids[:-1]
        return is_first

    def ranks(self) -> np.ndarray:
        """Ordinal of each hit along its ray (0 = nearest)."""
        if not len(self.t):
            return np.zeros(0, dtype=np.int64)
        starts = self._is_first()
        group_start = np.maximum.accumulate(np.where(starts, np.arange(len(self.t)), 0))
        return np.arange(len(self.t)) - group_start


class TriangleBVH:
    """Median-split bounding-volume hierarchy over triangle corners."""

    def __init__(self, corners: np.ndarray, leaf_size: int = LEAF_SIZE):
        """
        Build the hierarchy.

        Args:
            corners: (m, 3, 3) triangle corners
            leaf_size: Maximum triangles per leaf
        """
        corners = np.asarray(corners, dtype=np.float64)
        self._v0 = corners[:, 0]
        self._e1 = corners[:, 1] - corners[:, 0]
        self._e2 = corners[:, 2] - corners[:, 0]
        self._det_eps = 1e-12 * np.linalg.norm(self._e1, axis=1) * np.linalg.norm(self._e2, axis=1)

        lo = corners.min(axis=1)
        hi = corners.max(axis=1)
        centroids = corners.mean(axis=1)

        node_min: List[np.ndarray] = []
        node_max: List[np.ndarray] = []
        left: List[int] = []
        right: List[int] = []
        self._leaves: Dict[int, np.ndarray] = {}

        def new_node() -> int:
            node_min.append(np.zeros(3))
            node_max.append(np.zeros(3))
            left.append(-1)
            right.append(-1)
            return len(left) - 1

        stack: List[Tuple[int, np.ndarray]] = [(new_node(), np.arange(len(corners)))]
        while stack:
            node, members = stack.pop()
            node_min[node] = lo[members].min(axis=0) - BOX_PAD
            node_max[node] = hi[members].max(axis=0) + BOX_PAD
            if len(members) <= leaf_size:
                self._leaves[node] = members
                continue
            c = centroids[members]
            extent = c.max(axis=0) - c.min(axis=0)
            axis = int(np.argmax(extent))
            if extent[axis] <= 0.0:
                self._leaves[node] = members
                continue
            order = np.argsort(c[:, axis], kind="stable")
            mid = len(members) // 2
            left_node, right_node = new_node(), new_node()
            left[node], right[node] = left_node, right_node
            stack.append((right_node, members[order[mid:]]))
            stack.append((left_node, members[order[:mid]]))

        self._node_min = np.array(node_min)
        self._node_max = np.array(node_max)
        self._left = np.array(left)
        self._right = np.array(right)
        logger.debug(f"Built BVH: {len(left)} nodes, {len(self._leaves)} leaves")

    @property
    def n_nodes(self) -> int:
        """Number of BVH nodes."""
        return int(len(self._left))

    def intersect(
        self, origins: np.ndarray, directions: np.ndarray, t_min: float = 0.0
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Intersect a packet of rays with every triangle they reach.

        Args:
            origins: (k, 3) ray origins
            directions: (k, 3) unit directions
            t_min: Minimum accepted distance (inclusive)

        Returns:
            Unsorted (ray index, t, triangle index) arrays, one entry per hit
        """
        inv = np.divide(1.0, directions, out=np.zeros_like(directions), where=directions != 0.0)
        out_rays: List[np.ndarray] = []
        out_t: List[np.ndarray] = []
        out_tri: List[np.ndarray] = []

        stack: List[Tuple[int, np.ndarray]] = [(0, np.arange(len(origins)))]
        while stack:
            node, rays = stack.pop()
            rays = rays[self._slab(node, origins[rays], directions[rays], inv[rays], t_min)]
            if not rays.size:
                continue
            leaf = self._leaves.get(node)
            if leaf is None:
                stack.append((int(self._right[node]), rays))
                stack.append((int(self._left[node]), rays))
                continue
            r, t, tri = self._intersect_leaf(leaf, origins[rays], directions[rays], t_min)
            out_rays.append(rays[r])
            out_t.append(t)
            out_tri.append(tri)

        if not out_t:
            empty = np.zeros(0, dtype=np.int64)
            return empty, np.zeros(0), empty
        return np.concatenate(out_rays), np.concatenate(out_t), np.concatenate(out_tri)

    def _slab(
        self, node: int, o: np.ndarray, d: np.ndarray, inv: np.ndarray, t_min: float
    ) -> np.ndarray:
        lo = self._node_min[node]
        hi = self._node_max[node]
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
        parallel = d == 0.0
        inside = (o >= lo) & (o <= hi)
        near = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        far = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        t_near = near.max(axis=1)
        t_far = far.min(axis=1)
        return (t_far >= t_near) & (t_far >= t_min)

    def _intersect_leaf(
        self, tris: np.ndarray, o: np.ndarray, d: np.ndarray, t_min: float
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        v0 = self._v0[tris]
        e1 = self._e1[tris]
        e2 = self._e2[tris]

        p = np.cross(d[:, None, :], e2[None, :, :])
        det = np.einsum("mj,kmj->km", e1, p)
        ok = np.abs(det) > self._det_eps[tris][None, :]
        inv_det = np.divide(1.0, det, out=np.zeros_like(det), where=ok)

        s = o[:, None, :] - v0[None, :, :]
        u = np.einsum("kmj,kmj->km", s, p) * inv_det
        q = np.cross(s, e1[None, :, :])
        v = np.einsum("kj,kmj->km", d, q) * inv_det
        t = np.einsum("mj,kmj->km", e2, q) * inv_det

        # inclusive bounds: a ray through a shared edge hits both triangles, merged later
        ok &= (u >= -BARYCENTRIC_EPS) & (v >= -BARYCENTRIC_EPS) & (u + v <= 1.0 + BARYCENTRIC_EPS)
        ok &= t >= t_min
        r, c = np.nonzero(ok)
        return r, t[r, c], tris[c]


def cast_rays(
    mesh: TriMesh,
    origins: np.ndarray,
    directions: np.ndarray,
    t_min: float = 0.0,
) -> RayHits:
    """
    Cast a batch of rays and return every hit, merged and sorted.

    Hits on the same ray closer than 1e-6 mm to the previous one are merged
    (the lower triangle id is kept).

    Args:
        mesh: Target mesh
        origins: (k, 3) ray origins
        directions: (k, 3) or (3,) unit directions
        t_min: Minimum accepted distance (inclusive)

    Returns:
        RayHits sorted by ray index then distance
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.broadcast_to(np.asarray(directions, dtype=np.float64), origins.shape)
    bvh = mesh.bvh

    ray_parts: List[np.ndarray] = []
    t_parts: List[np.ndarray] = []
    tri_parts: List[np.ndarray] = []
    for start in range(0, len(origins), PACKET_SIZE):
        stop = start + PACKET_SIZE
        rays, t, tri = bvh.intersect(
            origins[start:stop], np.ascontiguousarray(directions[start:stop]), t_min
        )
        ray_parts.append(rays + start)
        t_parts.append(t)
        tri_parts.append(tri)

    if not ray_parts:
        empty = np.zeros(0, dtype=np.int64)
        return RayHits(empty, np.zeros(0), empty)

    ray_ids = np.concatenate(ray_parts)
    t = np.concatenate(t_parts)
    tri_ids = np.concatenate(tri_parts)
    order = np.lexsort((tri_ids, t, ray_ids))
    ray_ids, t, tri_ids = ray_ids[order], t[order], tri_ids[order]

    keep = np.ones(len(t), dtype=bool)
    keep[1:] = ~((ray_ids[1:] == ray_ids[:-1]) & (t[1:] - t[:-1] <= MERGE_TOLERANCE))
    return RayHits(ray_ids[keep], t[keep], tri_ids[keep])


def first_hits(mesh: TriMesh, origins: np.ndarray, direction: Sequence[float]) -> np.ndarray:
    """Distance to the first intersection of each ray (NaN on a miss)."""
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    return cast_rays(mesh, origins, np.asarray(direction, dtype=np.float64)).first(len(origins))


def supporting_triangles(
    mesh: TriMesh, points: np.ndarray, offset: float = DEFAULT_SKIP
) -> np.ndarray:
    """
    Triangle each point lies on, found with a short +Z ray.

    The ray starts ``offset`` below the point and must hit within
    ``2 * offset``; faces parallel to Z are never reported.

    Returns:
        Triangle index per point, -1 where no face is found
    """
    if offset <= 0:
        raise ValueError(f"offset must be > 0, got {offset}")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    origins = points - np.array([0.0, 0.0, offset])
    hits = cast_rays(mesh, origins, np.array([0.0, 0.0, 1.0]))
    tri = hits.first_triangles(len(points))
    t_first = np.nan_to_num(hits.first(len(points)), nan=np.inf)
    tri[t_first > 2.0 * offset] = -1
    return tri


def onto_facets(
    mesh: TriMesh, points: np.ndarray, step: float = 1e-4, offset: float = DEFAULT_SKIP
) -> np.ndarray:
    """
    Move points lying on a face edge slightly into that face.

    Each point found on a triangle moves toward the triangle centroid by
    ``step`` (at most half the distance), so a ray leaving it along the
    face's wall no longer grazes the rim of a face below. Other points
    are returned unchanged.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    tri = supporting_triangles(mesh, points, offset)
    moved = points.copy()
    on_face = tri >= 0
    if not np.any(on_face):
        return moved
    toward = mesh.corners[tri[on_face]].mean(axis=1) - points[on_face]
    dist = np.linalg.norm(toward, axis=1)
    scale = np.divide(
        np.minimum(step, 0.5 * dist), dist, out=np.zeros_like(dist), where=dist > 0
    )
    moved[on_face] += toward * scale[:, None]
    return moved


def occluded_mask(
    mesh: TriMesh,
    origins: np.ndarray,
    direction: Sequence[float],
    skip: float = DEFAULT_SKIP,
) -> np.ndarray:
    """
    Batched occlusion test.

    Args:
        mesh: Target mesh
        origins: (k, 3) points to test
        direction: Shared unit direction
        skip: Self-intersection guard (mm); hits at t <= skip are ignored

    Returns:
        Boolean array, True where some hit lies beyond ``skip``
    """
    if skip < 0:
        raise ValueError(f"skip must be >= 0, got {skip}")
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    hits = cast_rays(mesh, origins, np.asarray(direction, dtype=np.float64), t_min=skip)
    beyond = hits.t > skip
    mask = np.zeros(len(origins), dtype=bool)
    mask[hits.ray_ids[beyond]] = True
    return mask


def raycast_all_hits(mesh: TriMesh, ray: Ray) -> List[HitRecord]:
    """
    All intersections of one ray with the mesh, nearest first.

    Args:
        mesh: Target mesh
        ray: Ray to cast

    Returns:
        Hit records with t >= 0; empty on a miss
    """
    hits = cast_rays(mesh, ray.origin[None, :], ray.direction)
    normals = mesh.facet_normals
    return [
        HitRecord(
            t=float(t),
            point=ray.origin + t * ray.direction,
            triangle_id=int(tri),
            facet_normal=normals[tri].copy(),
        )
        for t, tri in zip(hits.t, hits.triangle_ids)
    ]


def raycast_occluded(
    mesh: TriMesh,
    origin: Sequence[float],
    direction: Sequence[float],
    skip: float = DEFAULT_SKIP,
) -> bool:
    """True iff the ray from ``origin`` meets the mesh beyond ``skip`` mm."""
    origins = np.asarray(origin, dtype=np.float64)[None, :]
    return bool(occluded_mask(mesh, origins, direction, skip)[0])
