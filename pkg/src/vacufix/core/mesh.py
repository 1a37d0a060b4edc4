"""Triangle mesh container, STL input/output and mass properties."""

import io
import logging
import re
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence, Tuple, Union

import numpy as np
import trimesh

from vacufix.core.errors import (
    EmptyMeshError,
    MeshError,
    NotWatertightError,
    TruncatedBinaryError,
    UnreadableFileError,
)

if TYPE_CHECKING:
    from vacufix.core.raycast import TriangleBVH

logger = logging.getLogger(__name__)

AREA_EPSILON = 1e-9  # mm²
HEADER_SIZE = 80
RECORD_SIZE = 50  # bytes per binary facet
_ASCII_BODY_RE = re.compile(rb"\b(facet|endsolid)\b", re.IGNORECASE)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class LoadOptions:
    """Options applied while turning an STL triangle soup into a TriMesh."""

    area_epsilon: float = AREA_EPSILON
    merge_decimals: int = 9  # vertex welding precision (decimal places, mm)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle surface in millimetres.

    Arrays are copied and frozen at construction, so a mesh (and the BVH it
    builds on first use) can be shared read-only between workers.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    degenerate_count: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("Triangle index out of range of the vertex array")
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @classmethod
    def from_triangle_soup(
        cls,
        corners: np.ndarray,
        options: Optional[LoadOptions] = None,
        name: str = "",
    ) -> "TriMesh":
        """
        Weld an (m, 3, 3) array of triangle corners into an indexed mesh.

        Triangles whose area is at or below ``options.area_epsilon`` after
        welding are dropped and counted.

        Args:
            corners: Triangle corner coordinates
            options: Welding and degeneracy options
            name: Optional mesh label

        Returns:
            TriMesh with degenerate triangles removed

        Raises:
            EmptyMeshError: If no valid triangle remains
        """
        options = options or LoadOptions()
        corners = np.asarray(corners, dtype=np.float64).reshape(-1, 3, 3)
        total = len(corners)
        if total == 0:
            raise EmptyMeshError("Mesh contains no triangles")

        flat = np.round(corners.reshape(-1, 3), options.merge_decimals) + 0.0
        finite = np.isfinite(flat).all(axis=1).reshape(-1, 3).all(axis=1)
        flat[~np.repeat(finite, 3)] = 0.0

        unique, inverse = np.unique(flat, axis=0, return_inverse=True)
        triangles = inverse.reshape(-1, 3)

        welded = unique[triangles]
        areas = 0.5 * np.linalg.norm(
            np.cross(welded[:, 1] - welded[:, 0], welded[:, 2] - welded[:, 0]), axis=1
        )
        valid = finite & (areas > options.area_epsilon)
        degenerate = int(total - valid.sum())
        if not valid.any():
            raise EmptyMeshError(f"All {total} triangles are degenerate")

        triangles = triangles[valid]
        used, remap = np.unique(triangles, return_inverse=True)
        mesh = cls(
            vertices=unique[used],
            triangles=remap.reshape(-1, 3),
            degenerate_count=degenerate,
            name=name,
        )
        if degenerate:
            logger.warning(f"Dropped {degenerate} degenerate triangle(s) from {name or 'mesh'}")
        return mesh

    @property
    def n_triangles(self) -> int:
        """Number of triangles."""
        return int(len(self.triangles))

    @cached_property
    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds as (min corner, max corner)."""
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def bbox_diagonal(self) -> float:
        """Length of the bounding box diagonal (mm)."""
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @cached_property
    def corners(self) -> np.ndarray:
        """Triangle corners as an (m, 3, 3) array."""
        return self.vertices[self.triangles]

    @cached_property
    def facet_areas(self) -> np.ndarray:
        """Triangle areas (mm²)."""
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @cached_property
    def facet_normals(self) -> np.ndarray:
        """Unit facet normals following the triangle winding."""
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)

    @cached_property
    def watertight(self) -> bool:
        """True if the surface is closed and consistently wound.

        Every directed edge a→b must be matched by as many b→a edges. Edges
        where several sheets meet (two solids touching along a line) are
        accepted as long as the counts balance.
        """
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        n = len(self.vertices)
        keys = np.sort(directed[:, 0] * n + directed[:, 1])
        reverse = np.sort(directed[:, 1] * n + directed[:, 0])
        return bool(np.array_equal(keys, reverse))

    @cached_property
    def bvh(self) -> "TriangleBVH":
        """Bounding-volume hierarchy over the triangles, built on first use."""
        from vacufix.core.raycast import TriangleBVH

        return TriangleBVH(self.corners)

    def translated(self, offset: Sequence[float]) -> "TriMesh":
        """Return a copy moved by ``offset`` (mm)."""
        return TriMesh(
            self.vertices + np.asarray(offset, dtype=np.float64),
            self.triangles,
            self.degenerate_count,
            self.name,
        )

    def transformed(
        self, rotation: np.ndarray, offset: Sequence[float] = (0.0, 0.0, 0.0)
    ) -> "TriMesh":
        """Return a copy rotated by ``rotation`` (3x3) then moved by ``offset``."""
        rotation = np.asarray(rotation, dtype=np.float64)
        return TriMesh(
            self.vertices @ rotation.T + np.asarray(offset, dtype=np.float64),
            self.triangles,
            self.degenerate_count,
            self.name,
        )


@dataclass(frozen=True, eq=False)
class MassProperties:
    """Volume, centre of mass and mass of a solid."""

    volume: float  # mm³
    com: np.ndarray  # mm
    mass: float  # kg

    def weight(self, gravity: float) -> float:
        """Gravitational force magnitude (N)."""
        return self.mass * gravity


def load_stl(path: PathLike, options: Optional[LoadOptions] = None) -> TriMesh:
    """
    Load an ASCII or binary STL file as a TriMesh in millimetres.

    trimesh reads the raw facets (``process=False``); welding and degenerate
    triangle removal are done by :meth:`TriMesh.from_triangle_soup`.

    Args:
        path: STL file path
        options: Welding and degeneracy options

    Returns:
        Welded mesh with degenerate triangles removed

    Raises:
        UnreadableFileError: If the file is missing or cannot be parsed
        TruncatedBinaryError: If a binary payload is shorter than declared
        EmptyMeshError: If no valid triangle remains
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise UnreadableFileError(f"Cannot read STL file {path}: {e}") from e

    data = _trim_binary_payload(data, path)
    try:
        loaded = trimesh.load_mesh(io.BytesIO(data), file_type="stl", process=False)
    except Exception as e:
        raise UnreadableFileError(f"Cannot parse STL file {path}: {e}") from e
    if not isinstance(loaded, trimesh.Trimesh):
        raise EmptyMeshError(f"{path} contains no triangles")

    corners = np.asarray(loaded.triangles, dtype=np.float64)
    mesh = TriMesh.from_triangle_soup(corners, options, name=path.stem)
    logger.info(
        f"Loaded {path.name}: {mesh.n_triangles} triangles, "
        f"{mesh.degenerate_count} degenerate dropped, watertight={mesh.watertight}"
    )
    return mesh


def save_stl(mesh: TriMesh, path: PathLike, binary: bool = True) -> Path:
    """
    Write a mesh as STL through trimesh's exporter.

    Args:
        mesh: Mesh to write
        path: Destination file
        binary: Write binary (default) or ASCII STL

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    exported = trimesh.Trimesh(
        vertices=np.array(mesh.vertices), faces=np.array(mesh.triangles), process=False
    )
    exported.export(file_obj=str(path), file_type="stl" if binary else "stl_ascii")
    logger.debug(f"Wrote {mesh.n_triangles} triangles to {path}")
    return path


def mass_properties(mesh: TriMesh, density: float) -> MassProperties:
    """
    Integrate volume and centre of mass over a closed mesh.

    Signed tetrahedra are taken against the bbox minimum so the result is
    translation equivariant to rounding precision.

    Args:
        mesh: Watertight mesh (mm)
        density: Uniform density (kg/mm³)

    Returns:
        MassProperties with mass = density × volume

    Raises:
        NotWatertightError: If the mesh is open or its signed volume is not positive
    """
    if not mesh.watertight:
        raise NotWatertightError(
            f"Mesh {mesh.name or ''} has an open or non-manifold boundary; "
            "set mesh.com and mesh.mass explicitly"
        )

    origin = mesh.bbox[0]
    c = mesh.corners - origin
    v0, v1, v2 = c[:, 0], c[:, 1], c[:, 2]
    signed = np.einsum("ij,ij->i", v0, np.cross(v1, v2)) / 6.0
    volume = float(signed.sum())
    if volume <= 0.0:
        raise NotWatertightError(f"Signed volume {volume:.6g} mm³ is not positive")

    com = (signed[:, None] * (v0 + v1 + v2)).sum(axis=0) / (4.0 * volume) + origin
    return MassProperties(volume=volume, com=com, mass=density * volume)


def resolve_mass_properties(
    mesh: TriMesh,
    density: float,
    com: Optional[Sequence[float]] = None,
    mass: Optional[float] = None,
) -> MassProperties:
    """
    Mass properties with optional explicit overrides.

    A watertight mesh is integrated and any override replaces the computed
    value. An open mesh needs both ``com`` and ``mass``.

    Raises:
        NotWatertightError: If the mesh is open and overrides are incomplete
    """
    if mesh.watertight:
        props = mass_properties(mesh, density)
        return MassProperties(
            volume=props.volume,
            com=props.com if com is None else np.asarray(com, dtype=np.float64),
            mass=props.mass if mass is None else float(mass),
        )
    if com is None or mass is None:
        raise NotWatertightError(
            f"Mesh {mesh.name or ''} is not watertight; mesh.com and mesh.mass are required"
        )
    logger.info("Mesh is not watertight; using configured COM and mass")
    return MassProperties(
        volume=float("nan"), com=np.asarray(com, dtype=np.float64), mass=float(mass)
    )


def _looks_ascii(data: bytes) -> bool:
    """Binary exporters often start the header with "solid" too; require an ASCII body."""
    return data.lstrip()[:5].lower() == b"solid" and _ASCII_BODY_RE.search(data) is not None


def _trim_binary_payload(data: bytes, path: Path) -> bytes:
    """
    Check a binary STL against its declared facet count.

    Bytes past the declared records are dropped so the reader sees an exact
    payload.

    Raises:
        TruncatedBinaryError: If fewer records are present than declared
    """
    if _looks_ascii(data) or len(data) < HEADER_SIZE + 4:
        return data
    (count,) = struct.unpack_from("<I", data, HEADER_SIZE)
    available = (len(data) - HEADER_SIZE - 4) // RECORD_SIZE
    if count > available:
        raise TruncatedBinaryError(f"{path} declares {count} triangles but holds only {available}")
    return data[: HEADER_SIZE + 4 + count * RECORD_SIZE]
