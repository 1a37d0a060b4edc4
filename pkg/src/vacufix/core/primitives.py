"""Closed synthetic meshes: boxes, stepped height fields, shells and spheres.

Used by the demo script and the test-suite in place of CAD exports.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from vacufix.core.mesh import TriMesh

Vec3 = Sequence[float]


def box_mesh(lo: Vec3, hi: Vec3, name: str = "box") -> TriMesh:
    """Axis-aligned box with outward facing triangles."""
    return column_solid([lo[0], hi[0]], [lo[1], hi[1]], [[lo[2]]], [[hi[2]]], name=name)


def plate(size_x: float, size_y: float, thickness: float, name: str = "plate") -> TriMesh:
    """Box [0, size_x] × [0, size_y] × [0, thickness]."""
    return box_mesh((0.0, 0.0, 0.0), (size_x, size_y, thickness), name=name)


def column_solid(
    x_edges: Sequence[float],
    y_edges: Sequence[float],
    bottoms: Sequence[Sequence[float]],
    tops: Sequence[Sequence[float]],
    name: str = "columns",
) -> TriMesh:
    """
    Watertight solid made of rectangular columns on a grid.

    Cell (i, j) spans [x_edges[i], x_edges[i+1]] × [y_edges[j], y_edges[j+1]]
    and [bottoms[i][j], tops[i][j]] in z; NaN marks an empty cell. Columns of
    neighbouring cells must overlap in z or not touch at all.

    Side walls are split at every z level meeting at a grid corner, so
    neighbouring faces always share whole edges.

    Args:
        x_edges: Increasing x coordinates, one more than the number of columns
        y_edges: Increasing y coordinates, one more than the number of rows
        bottoms: Per-cell bottom z
        tops: Per-cell top z
        name: Mesh label

    Returns:
        Closed TriMesh
    """
    xs = np.asarray(x_edges, dtype=np.float64)
    ys = np.asarray(y_edges, dtype=np.float64)
    bottom = np.asarray(bottoms, dtype=np.float64).reshape(len(xs) - 1, len(ys) - 1)
    top = np.asarray(tops, dtype=np.float64).reshape(bottom.shape)
    nx, ny = bottom.shape
    filled = ~(np.isnan(bottom) | np.isnan(top))
    if (top[filled] <= bottom[filled]).any():
        raise ValueError("Every filled cell needs bottom < top")

    def cell(i: int, j: int) -> Optional[Tuple[float, float]]:
        if 0 <= i < nx and 0 <= j < ny and filled[i, j]:
            return float(bottom[i, j]), float(top[i, j])
        return None

    levels: Dict[Tuple[int, int], List[float]] = {}
    for i in range(nx + 1):
        for j in range(ny + 1):
            zs = set()
            for ci, cj in ((i - 1, j - 1), (i - 1, j), (i, j - 1), (i, j)):
                span = cell(ci, cj)
                if span:
                    zs.update(span)
            levels[(i, j)] = sorted(zs)

    triangles: List[np.ndarray] = []
    for i in range(nx):
        for j in range(ny):
            span = cell(i, j)
            if span is None:
                continue
            z0, z1 = span
            x0, x1, y0, y1 = xs[i], xs[i + 1], ys[j], ys[j + 1]
            top_quad = [(x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)]
            bottom_quad = [(x0, y0, z0), (x0, y1, z0), (x1, y1, z0), (x1, y0, z0)]
            for quad in (top_quad, bottom_quad):
                triangles.append(np.array([quad[0], quad[1], quad[2]]))
                triangles.append(np.array([quad[0], quad[2], quad[3]]))

            # (neighbour, node a, node b, outward direction)
            sides = (
                ((i - 1, j), (i, j), (i, j + 1), (-1.0, 0.0)),
                ((i + 1, j), (i + 1, j), (i + 1, j + 1), (1.0, 0.0)),
                ((i, j - 1), (i, j), (i + 1, j), (0.0, -1.0)),
                ((i, j + 1), (i, j + 1), (i + 1, j + 1), (0.0, 1.0)),
            )
            for (ni, nj), node_a, node_b, outward in sides:
                for lo, hi in _exposed(span, cell(ni, nj)):
                    triangles.extend(
                        _wall(
                            (xs[node_a[0]], ys[node_a[1]]),
                            (xs[node_b[0]], ys[node_b[1]]),
                            [z for z in levels[node_a] if lo <= z <= hi],
                            [z for z in levels[node_b] if lo <= z <= hi],
                            outward,
                        )
                    )

    return TriMesh.from_triangle_soup(np.array(triangles), name=name)


def hollow_box(lo: Vec3, hi: Vec3, wall: float, name: str = "hollow_box") -> TriMesh:
    """Closed box with an internal cavity ``wall`` mm inside every face."""
    outer = box_mesh(lo, hi)
    inner_lo = np.asarray(lo, dtype=np.float64) + wall
    inner_hi = np.asarray(hi, dtype=np.float64) - wall
    inner = box_mesh(inner_lo, inner_hi)
    cavity = inner.corners[:, ::-1]
    return TriMesh.from_triangle_soup(np.concatenate([outer.corners, cavity]), name=name)


def uv_sphere(
    center: Vec3, radius: float, n_lat: int = 24, n_lon: int = 48, name: str = "sphere"
) -> TriMesh:
    """Latitude/longitude tessellated sphere with single-vertex poles."""
    c = np.asarray(center, dtype=np.float64)
    polar = np.linspace(0.0, np.pi, n_lat + 1)[1:-1]
    azimuth = np.linspace(0.0, 2.0 * np.pi, n_lon, endpoint=False)
    ring = np.stack(
        [
            np.outer(np.sin(polar), np.cos(azimuth)),
            np.outer(np.sin(polar), np.sin(azimuth)),
            np.outer(np.cos(polar), np.ones_like(azimuth)),
        ],
        axis=-1,
    )
    ring = c + radius * ring
    north = c + np.array([0.0, 0.0, radius])
    south = c - np.array([0.0, 0.0, radius])

    triangles: List[np.ndarray] = []
    for k in range(n_lon):
        k1 = (k + 1) % n_lon
        triangles.append(np.array([north, ring[0, k], ring[0, k1]]))
        triangles.append(np.array([south, ring[-1, k1], ring[-1, k]]))
        for r in range(n_lat - 2):
            a, b = ring[r, k], ring[r, k1]
            d, e = ring[r + 1, k], ring[r + 1, k1]
            triangles.append(np.array([a, d, e]))
            triangles.append(np.array([a, e, b]))
    return TriMesh.from_triangle_soup(np.array(triangles), name=name)


def _exposed(
    span: Tuple[float, float], neighbour: Optional[Tuple[float, float]]
) -> List[Tuple[float, float]]:
    lo, hi = span
    if neighbour is None:
        return [(lo, hi)]
    n_lo, n_hi = neighbour
    if n_hi <= lo or n_lo >= hi:
        return [(lo, hi)]
    parts = []
    if n_lo > lo:
        parts.append((lo, n_lo))
    if n_hi < hi:
        parts.append((n_hi, hi))
    return parts


def _wall(
    a: Tuple[float, float],
    b: Tuple[float, float],
    zs_a: List[float],
    zs_b: List[float],
    outward: Tuple[float, float],
) -> List[np.ndarray]:
    """Zipper-triangulate a vertical rectangle whose two sides carry extra vertices."""
    left = [np.array([a[0], a[1], z]) for z in zs_a]
    right = [np.array([b[0], b[1], z]) for z in zs_b]
    out = np.array([outward[0], outward[1], 0.0])
    tris: List[np.ndarray] = []
    i = j = 0
    while i < len(left) - 1 or j < len(right) - 1:
        advance_left = j == len(right) - 1 or (
            i < len(left) - 1 and left[i + 1][2] <= right[j + 1][2]
        )
        if advance_left:
            tri = np.array([left[i], right[j], left[i + 1]])
            i += 1
        else:
            tri = np.array([left[i], right[j], right[j + 1]])
            j += 1
        if np.dot(np.cross(tri[1] - tri[0], tri[2] - tri[0]), out) < 0:
            tri = tri[::-1]
        tris.append(tri)
    return tris
