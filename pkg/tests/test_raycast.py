"""
Tests for BVH ray casting against a brute-force oracle.
"""

from typing import List

import numpy as np
import pytest

from vacufix.core.mesh import TriMesh
from vacufix.core.primitives import box_mesh, column_solid, hollow_box, uv_sphere
from vacufix.core.raycast import (
    Ray,
    TriangleBVH,
    cast_rays,
    first_hits,
    occluded_mask,
    onto_facets,
    raycast_all_hits,
    raycast_occluded,
    supporting_triangles,
)


def brute_force_hits(
    corners: np.ndarray, origin: np.ndarray, direction: np.ndarray
) -> List[float]:
    """Scalar Möller–Trumbore over every triangle, merged within 1e-6."""
    ts = []
    for v0, v1, v2 in corners:
        e1, e2 = v1 - v0, v2 - v0
        p = np.cross(direction, e2)
        det = float(np.dot(e1, p))
        if abs(det) <= 1e-12 * np.linalg.norm(e1) * np.linalg.norm(e2):
            continue
        s = origin - v0
        u = float(np.dot(s, p)) / det
        q = np.cross(s, e1)
        v = float(np.dot(direction, q)) / det
        t = float(np.dot(e2, q)) / det
        if u >= -1e-9 and v >= -1e-9 and u + v <= 1 + 1e-9 and t >= 0:
            ts.append(t)
    ts.sort()
    merged: List[float] = []
    for t in ts:
        if not merged or t - merged[-1] > 1e-6:
            merged.append(t)
    return merged


@pytest.fixture
def unit_cube():
    """Closed unit cube at the origin."""
    return box_mesh((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


class TestRay:
    """Ray construction."""

    def test_non_unit_direction_rejected(self):
        """Test that a non-unit direction raises ValueError."""
        with pytest.raises(ValueError):
            Ray(np.zeros(3), np.array([0.0, 0.0, 2.0]))

    def test_toward_normalizes(self):
        """Test that Ray.toward normalizes its direction."""
        ray = Ray.toward((0, 0, 0), (0, 3, 4))
        np.testing.assert_allclose(ray.direction, [0, 0.6, 0.8])


class TestRaycastAllHits:
    """Single-ray queries."""

    def test_through_cube_centre(self, unit_cube):
        """Test that a +Z ray through the cube hits bottom then top exactly once each."""
        hits = raycast_all_hits(unit_cube, Ray((0.5, 0.5, -1.0), (0.0, 0.0, 1.0)))

        assert [h.t for h in hits] == pytest.approx([1.0, 2.0])
        np.testing.assert_allclose(hits[0].point, [0.5, 0.5, 0.0])
        assert hits[0].facet_normal[2] == pytest.approx(-1.0)
        assert hits[1].facet_normal[2] == pytest.approx(1.0)

    def test_miss(self, unit_cube):
        """Test that a ray beside the bbox returns no hit."""
        assert raycast_all_hits(unit_cube, Ray((5.0, 5.0, -1.0), (0.0, 0.0, 1.0))) == []

    def test_behind_origin_not_reported(self, unit_cube):
        """Test that hits at negative t are ignored."""
        hits = raycast_all_hits(unit_cube, Ray((0.5, 0.5, 0.5), (0.0, 0.0, 1.0)))
        assert [h.t for h in hits] == pytest.approx([0.5])

    def test_hollow_box_four_hits(self):
        """Test that a ray through a hollow box crosses both walls twice, in order."""
        mesh = hollow_box((0, 0, 0), (10, 10, 10), 2.0)

        hits = raycast_all_hits(mesh, Ray((5.0, 5.0, -1.0), (0.0, 0.0, 1.0)))

        assert [h.t for h in hits] == pytest.approx([1.0, 3.0, 9.0, 11.0])

    def test_grazing_vertex_merged(self, unit_cube):
        """Test that a ray through a shared cube corner reports a single hit per face."""
        hits = raycast_all_hits(unit_cube, Ray((0.0, 0.0, -1.0), (0.0, 0.0, 1.0)))
        assert [h.t for h in hits] == pytest.approx([1.0, 2.0])


class TestOcclusion:
    """Occlusion queries."""

    def test_bottom_face_looking_down_is_clear(self, unit_cube):
        """Test that a point on the underside sees nothing below it."""
        assert not raycast_occluded(unit_cube, (0.5, 0.5, 0.0), (0.0, 0.0, -1.0))

    def test_bottom_face_looking_up_is_blocked(self, unit_cube):
        """Test that the top face occludes the view upward from the underside."""
        assert raycast_occluded(unit_cube, (0.5, 0.5, 0.0), (0.0, 0.0, 1.0))

    def test_negative_skip_rejected(self, unit_cube):
        """Test that a negative skip distance raises ValueError."""
        with pytest.raises(ValueError):
            raycast_occluded(unit_cube, (0.5, 0.5, 0.0), (0.0, 0.0, 1.0), skip=-1.0)

    def test_batch_matches_single_queries(self):
        """Test that occluded_mask agrees with per-point raycast_occluded."""
        mesh = hollow_box((0, 0, 0), (10, 10, 10), 2.0)
        points = np.array([[5, 5, 0], [5, 5, 2], [5, 5, 8], [5, 5, 10], [1, 1, 8]], dtype=float)

        mask = occluded_mask(mesh, points, (0.0, 0.0, -1.0))

        expected = [raycast_occluded(mesh, p, (0.0, 0.0, -1.0)) for p in points]
        assert mask.tolist() == expected
        assert mask.tolist() == [False, True, True, True, True]


class TestAgainstBruteForce:
    """BVH traversal must match testing every triangle."""

    def test_random_triangle_soup(self):
        """Test random rays against random triangles."""
        rng = np.random.default_rng(1)
        corners = rng.uniform(0.0, 10.0, (300, 3, 3))
        mesh = TriMesh(corners.reshape(-1, 3), np.arange(900).reshape(-1, 3))
        origins = rng.uniform(-2.0, 12.0, (200, 3))
        directions = rng.normal(size=(200, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)

        hits = cast_rays(mesh, origins, directions)

        for k in range(len(origins)):
            expected = brute_force_hits(mesh.corners, origins[k], directions[k])
            got = hits.t[hits.ray_ids == k].tolist()
            assert got == pytest.approx(expected, abs=1e-9)

    def test_sphere_vertical_rays(self):
        """Test that +Z rays through a closed sphere match the oracle and come in pairs."""
        rng = np.random.default_rng(2)
        mesh = uv_sphere((0, 0, 0), 10.0, n_lat=12, n_lon=24)
        angle = rng.uniform(0, 2 * np.pi, 100)
        radius = 9.0 * np.sqrt(rng.uniform(0, 1, 100))
        origins = np.column_stack(
            [radius * np.cos(angle), radius * np.sin(angle), np.full(100, -20.0)]
        )

        hits = cast_rays(mesh, origins, np.array([0.0, 0.0, 1.0]))

        counts = hits.counts(len(origins))
        assert (counts == 2).all()
        for k in range(len(origins)):
            expected = brute_force_hits(mesh.corners, origins[k], np.array([0.0, 0.0, 1.0]))
            assert hits.t[hits.ray_ids == k].tolist() == pytest.approx(expected, abs=1e-9)

    def test_small_leaves(self):
        """Test that a deep tree (leaf size 1) finds the same hits."""
        mesh = uv_sphere((0, 0, 0), 5.0, n_lat=8, n_lon=16)
        bvh = TriangleBVH(mesh.corners, leaf_size=1)
        origins = np.array([[0.31, -0.17, -10.0], [1.03, 2.11, -10.0]])
        directions = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])

        rays, t, _ = bvh.intersect(origins, directions)

        for k in range(2):
            expected = brute_force_hits(mesh.corners, origins[k], directions[k])
            assert np.sort(t[rays == k]).tolist() == pytest.approx(expected, abs=1e-9)
        assert bvh.n_nodes > 1


def test_first_hits_nan_on_miss(unit_cube):
    """Test that first_hits gives the nearest distance and NaN for a miss."""
    origins = np.array([[0.5, 0.5, -2.0], [3.0, 3.0, -2.0]])

    t = first_hits(unit_cube, origins, (0.0, 0.0, 1.0))

    assert t[0] == pytest.approx(2.0)
    assert np.isnan(t[1])


def test_hit_ranks(unit_cube):
    """Test that ranks count hits along each ray from zero."""
    origins = np.array([[0.5, 0.5, -1.0], [0.25, 0.75, -1.0]])

    hits = cast_rays(unit_cube, origins, np.array([0.0, 0.0, 1.0]))

    assert hits.ranks().tolist() == [0, 1, 0, 1]
    assert hits.ray_ids.tolist() == [0, 0, 1, 1]


class TestFacets:
    """Locating the face under a sample point."""

    @pytest.fixture
    def step(self):
        """Two columns whose undersides differ by 3 mm at x = 60."""
        return column_solid([0, 60, 120], [0, 80], [[0], [3]], [[20], [20]])

    def test_point_on_edge_finds_the_horizontal_face(self, step):
        """Test that a point on the step rim reports the raised underside, not the wall."""
        tri = supporting_triangles(step, np.array([[60.0, 40.0, 3.0], [60.0, 40.0, -5.0]]))

        assert tri[1] == -1
        assert tri[0] >= 0
        np.testing.assert_allclose(step.corners[tri[0]][:, 2], 3.0)
        assert step.corners[tri[0]][:, 0].min() >= 60.0

    def test_first_triangles_of_a_miss(self, unit_cube):
        """Test that first_triangles marks missed rays with -1."""
        origins = np.array([[0.5, 0.5, -1.0], [3.0, 3.0, -1.0]])

        hits = cast_rays(unit_cube, origins, np.array([0.0, 0.0, 1.0]))
        tri = hits.first_triangles(2)

        assert tri[1] == -1
        np.testing.assert_allclose(unit_cube.corners[tri[0]][:, 2], 0.0)

    def test_onto_facets_moves_into_the_face(self, step):
        """Test that rim points move a tiny step onto their face and others stay put."""
        points = np.array([[60.0, 40.0, 3.0], [60.0, 40.0, 0.0], [60.0, 40.0, -5.0]])

        moved = onto_facets(step, points)

        assert 60.0 < moved[0, 0] <= 60.0 + 1e-4 + 1e-12
        assert 60.0 - 1e-4 - 1e-12 <= moved[1, 0] < 60.0
        np.testing.assert_allclose(moved[:, 2], points[:, 2])
        np.testing.assert_array_equal(moved[2], points[2])

    def test_rim_of_raised_underside_sees_the_floor(self, step):
        """Test that the raised rim is clear looking down once moved onto its face."""
        rim = np.array([[60.0, 40.0, 3.0]])

        assert occluded_mask(step, rim, (0.0, 0.0, -1.0))[0]
        assert not occluded_mask(step, onto_facets(step, rim), (0.0, 0.0, -1.0))[0]

    def test_non_positive_offset_rejected(self, step):
        """Test that the lookup offset must be positive."""
        with pytest.raises(ValueError):
            supporting_triangles(step, np.zeros((1, 3)), offset=0.0)
