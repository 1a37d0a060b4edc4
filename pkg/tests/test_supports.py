"""
Tests for grid partition, configuration enumeration, the footprint hull test and ranking.
"""

import numpy as np
import pytest
from shapely.geometry import LineString, Point, Polygon

from vacufix.core.errors import TooFewCandidatesError
from vacufix.core.statics import EquilibriumResult, SweepResult
from vacufix.core.supports import (
    SupportConfig,
    com_inclusion_test,
    configs_to_records,
    enumerate_configs,
    evaluate_config,
    footprint_hull,
    min_interior_angle,
    partition_grid,
    rank_configs,
)

RADIUS = 8.7


def _true_margin(contacts_xy: np.ndarray, com_xy: np.ndarray, radius: float) -> float:
    """Exact signed margin of a point in the disk-offset of a segment or triangle."""
    p = Point(*com_xy)
    if len(contacts_xy) == 2:
        return radius - LineString(contacts_xy).distance(p)
    polygon = Polygon(contacts_xy)
    if polygon.contains(p):
        return radius + polygon.exterior.distance(p)
    return radius - polygon.distance(p)


def _sweep(min_force: float, f_max: float = 5.7) -> SweepResult:
    result = EquilibriumResult(
        forces=np.array([min_force, 3.0, 3.0]),
        residual=0.0,
        feasible=min_force >= -f_max,
        limiting_contact=0,
        press=0.0,
    )
    critical = None if result.feasible else 0.0
    return SweepResult(press_levels=np.array([0.0]), results=[result], critical_press=critical)


@pytest.fixture
def make_config(make_points):
    """Factory for pre-evaluated configurations with a square hull."""

    def _make(config_id, xy, margin=10.0, side=50.0, com_inside=True):
        xy = np.asarray(xy, dtype=float)
        points = make_points(np.column_stack([xy, np.zeros(len(xy))]))
        square = np.array([[0, 0], [side, 0], [side, side], [0, side]], dtype=float)
        return SupportConfig(
            config_id=config_id,
            contacts=list(points),
            footprint_radius=RADIUS,
            hull_vertices=square,
            com_inside=com_inside,
            margin=margin,
        )

    return _make


class TestPartition:
    """Grid partition."""

    def test_cell_side(self, make_points):
        """Test that the cell diagonal equals the spacing."""
        partition = partition_grid(make_points([[0, 0, 0]]), spacing_d=60.0)
        assert partition.cell_side * np.sqrt(2) == pytest.approx(60.0)

    def test_representative_closest_to_centre(self, make_points):
        """Test that each cell is represented by its member nearest the cell centre."""
        points = make_points([[0, 0, 0], [10, 10, 0], [20, 20, 0], [100, 0, 0]])

        partition = partition_grid(points, spacing_d=60.0)

        assert len(partition.cells) == 2
        assert partition.representative_points() == [2, 3]

    def test_invalid_spacing(self, make_points):
        """Test that a non-positive spacing raises ValueError."""
        with pytest.raises(ValueError):
            partition_grid(make_points([[0, 0, 0]]), spacing_d=0.0)


class TestEnumerate:
    """2P / 3P enumeration."""

    def test_equilateral_triangle(self, make_points):
        """Test that three well separated points give one 3P and three 2P configurations."""
        points = make_points([[0, 0, 0], [100, 0, 0], [50, 86.60254, 0]])
        partition = partition_grid(points)

        triples = enumerate_configs(partition, 3)
        pairs = enumerate_configs(partition, 2)

        assert [c.config_id for c in triples] == ["3P-0000"]
        assert [c.config_id for c in pairs] == ["2P-0000", "2P-0001", "2P-0002"]
        assert triples[0].arity == 3

    def test_ten_points_on_a_circle(self, make_points):
        """Test that ten mutually distant points give C(10,3) and C(10,2) configurations."""
        angles = np.radians(36.0 * np.arange(10))
        xy = 120.0 * np.column_stack([np.cos(angles), np.sin(angles)])
        partition = partition_grid(make_points(np.column_stack([xy, np.zeros(10)])))

        assert len(enumerate_configs(partition, 3)) == 120
        assert len(enumerate_configs(partition, 2)) == 45

    def test_spacing_enforced(self, make_points):
        """Test that contacts closer than spacing_d are never paired."""
        partition = partition_grid(make_points([[0, 0, 0], [50, 0, 0]]))

        assert enumerate_configs(partition, 2) == []
        assert len(enumerate_configs(partition, 2, enforce_spacing=False)) == 1

    def test_collinear_triples_skipped(self, make_points):
        """Test that collinear triples are excluded."""
        partition = partition_grid(make_points([[0, 0, 0], [100, 0, 0], [200, 0, 0]]))

        assert enumerate_configs(partition, 3) == []
        assert len(enumerate_configs(partition, 2)) == 3

    def test_too_few_candidates(self, make_points):
        """Test that two representatives cannot form a 3P configuration."""
        partition = partition_grid(make_points([[0, 0, 0], [100, 0, 0]]))
        with pytest.raises(TooFewCandidatesError):
            enumerate_configs(partition, 3)

    def test_all_points_when_not_one_per_cell(self, make_points):
        """Test that disabling one-per-cell draws from every point."""
        partition = partition_grid(make_points([[0, 0, 0], [10, 10, 0], [20, 20, 0]]))

        pairs = enumerate_configs(partition, 2, one_per_cell=False, enforce_spacing=False)
        assert len(pairs) == 3

    def test_invalid_arity(self, make_points):
        """Test that only 2 and 3 contacts are supported."""
        partition = partition_grid(make_points([[0, 0, 0]]))
        with pytest.raises(ValueError):
            enumerate_configs(partition, 4)


def test_min_interior_angle():
    """Test interior angles of simple triangles."""
    equilateral = np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
    collinear = np.array([[0, 0], [1, 0], [2, 0]])

    assert min_interior_angle(equilateral) == pytest.approx(60.0)
    assert min_interior_angle(collinear) == pytest.approx(0.0, abs=1e-6)


class TestFootprintHull:
    """Hull of the suction footprints."""

    def test_single_contact(self):
        """Test that one contact gives a regular polygon on the footprint circle."""
        hull = footprint_hull(np.array([[5.0, 5.0]]), RADIUS)

        assert len(hull) == 16
        np.testing.assert_allclose(np.linalg.norm(hull - [5.0, 5.0], axis=1), RADIUS)

    def test_two_samples_give_offset_rectangle(self):
        """Test that two samples per circle reproduce the baseline offset rectangle."""
        hull = np.round(footprint_hull(np.array([[0.0, 0.0], [100.0, 0.0]]), RADIUS, 2), 9)
        hull = hull[np.lexsort((hull[:, 1], hull[:, 0]))]

        np.testing.assert_allclose(
            hull, [[0, -RADIUS], [0, RADIUS], [100, -RADIUS], [100, RADIUS]], atol=1e-9
        )

    def test_area_close_to_dense_hull(self):
        """Test that 16 samples capture the offset triangle area within 0.5%."""
        tri = np.array([[0.0, 0.0], [100.0, 0.0], [50.0, 86.60254]])

        sparse = Polygon(footprint_hull(tri, RADIUS, 16)).area
        dense = Polygon(footprint_hull(tri, RADIUS, 360)).area

        assert sparse == pytest.approx(dense, rel=5e-3)

    def test_counter_clockwise(self):
        """Test that hull vertices are listed counter-clockwise."""
        hull = footprint_hull(np.array([[0.0, 0.0], [100.0, 0.0], [50.0, 80.0]]), RADIUS)
        x, y = hull[:, 0], hull[:, 1]
        signed_area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert signed_area > 0

    def test_invalid_sample_count(self):
        """Test that fewer than two samples per circle is rejected."""
        with pytest.raises(ValueError):
            footprint_hull(np.array([[0.0, 0.0]]), RADIUS, 1)


class TestComInclusion:
    """Signed COM margin."""

    def test_centroid_inside(self, make_points):
        """Test that the centroid of an equilateral tripod is inside with the expected margin."""
        points = make_points([[0, 0, 0], [100, 0, 0], [50, 86.60254, 0]])
        config = enumerate_configs(partition_grid(points), 3)[0]

        evaluated = evaluate_config(config, (50.0, 28.86751, 0.0))

        assert evaluated.com_inside
        inradius = 100.0 / (2 * np.sqrt(3))
        assert evaluated.margin == pytest.approx(inradius + RADIUS, abs=0.2)
        assert evaluated.area > 0

    def test_outside_offset_rectangle(self):
        """Test that a COM 20 mm beyond the offset rectangle has margin -20."""
        hull = footprint_hull(np.array([[0.0, 0.0], [100.0, 0.0]]), RADIUS, 16)

        inside, margin = com_inclusion_test(hull, (50.0, 28.7))

        assert not inside
        assert margin == pytest.approx(-20.0, abs=1e-9)

    def test_boundary_counts_as_outside(self):
        """Test that a COM on the hull boundary is not inside."""
        hull = footprint_hull(np.array([[0.0, 0.0], [100.0, 0.0]]), RADIUS, 2)

        inside, margin = com_inclusion_test(hull, (50.0, RADIUS))

        assert not inside
        assert margin == pytest.approx(0.0, abs=1e-9)

    def test_rigid_motion_invariance(self):
        """Test that rotating and translating contacts and COM together keeps the margin."""
        rng = np.random.default_rng(5)
        for _ in range(50):
            contacts = rng.uniform(-100, 100, (3, 2))
            com = rng.uniform(-100, 100, 2)
            theta = rng.uniform(0, 2 * np.pi)
            rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
            shift = rng.uniform(-500, 500, 2)

            _, base = com_inclusion_test(footprint_hull(contacts, RADIUS), com)
            _, moved = com_inclusion_test(
                footprint_hull(contacts @ rot.T + shift, RADIUS), rot @ com + shift
            )

            assert moved == pytest.approx(base, abs=1e-9)

    @pytest.mark.parametrize("arity", [2, 3])
    def test_against_exact_offset_region(self, arity):
        """Test 1000 random configurations against the exact disk-offset margin."""
        rng = np.random.default_rng(arity)
        slack = RADIUS * (1 - np.cos(np.pi / 16))
        checked = 0
        while checked < 1000:
            contacts = rng.uniform(-100, 100, (arity, 2))
            if arity == 3 and min_interior_angle(contacts) < 5.0:
                continue
            com = rng.uniform(-120, 120, 2)

            inside, margin = com_inclusion_test(footprint_hull(contacts, RADIUS), com)
            exact = _true_margin(contacts, com, RADIUS)

            assert exact - slack - 1e-9 <= margin <= exact + 1e-9
            if exact > slack + 1e-6:
                assert inside
            if inside:
                assert exact > 0
            checked += 1


class TestRanking:
    """Deterministic ranking."""

    def test_feasible_first(self, make_config):
        """Test that feasible configurations precede infeasible ones."""
        a = make_config("3P-0000", [[0, 0], [100, 0], [0, 100]])
        b = make_config("3P-0001", [[0, 0], [100, 0], [50, 100]])
        sweeps = {"3P-0000": {"S0": _sweep(-8.0)}, "3P-0001": {"S0": _sweep(-1.0)}}

        plan = rank_configs([a, b], sweeps)

        assert [c.config_id for c in plan.configs] == ["3P-0001", "3P-0000"]
        assert [e.rank for e in plan.entries] == [1, 2]
        assert [e.config.config_id for e in plan.feasible] == ["3P-0001"]

    def test_lower_suction_demand_wins(self, make_config):
        """Test that lower worst-case suction ranks higher."""
        a = make_config("3P-0000", [[0, 0], [100, 0], [0, 100]])
        b = make_config("3P-0001", [[0, 0], [100, 0], [50, 100]])
        sweeps = {"3P-0000": {"S0": _sweep(-3.0)}, "3P-0001": {"S0": _sweep(-1.0)}}

        plan = rank_configs([a, b], sweeps)

        assert plan.configs[0].config_id == "3P-0001"
        assert plan.entries[0].score.worst_suction_demand == pytest.approx(1.0)

    def test_margin_breaks_suction_tie(self, make_config):
        """Test that the larger COM margin wins when suction demand ties."""
        a = make_config("3P-0000", [[0, 0], [100, 0], [0, 100]], margin=10.0)
        b = make_config("3P-0001", [[0, 0], [100, 0], [50, 100]], margin=30.0)
        sweeps = {cid: {"S0": _sweep(2.0)} for cid in ("3P-0000", "3P-0001")}

        assert rank_configs([a, b], sweeps).configs[0].config_id == "3P-0001"

    def test_area_breaks_margin_tie(self, make_config):
        """Test that the larger hull area wins when suction and margin tie."""
        a = make_config("3P-0000", [[0, 0], [100, 0], [0, 100]], side=40.0)
        b = make_config("3P-0001", [[0, 0], [100, 0], [50, 100]], side=80.0)
        sweeps = {cid: {"S0": _sweep(2.0)} for cid in ("3P-0000", "3P-0001")}

        assert rank_configs([a, b], sweeps).configs[0].config_id == "3P-0001"

    def test_coordinates_break_full_tie(self, make_config):
        """Test that identical scores fall back to contact coordinates."""
        a = make_config("3P-0000", [[10, 0], [100, 0], [0, 100]])
        b = make_config("3P-0001", [[0, 0], [100, 0], [50, 100]])
        sweeps = {cid: {"S0": _sweep(2.0)} for cid in ("3P-0000", "3P-0001")}

        assert rank_configs([a, b], sweeps).configs[0].config_id == "3P-0001"
        assert rank_configs([b, a], sweeps).configs[0].config_id == "3P-0001"

    def test_demand_decides_across_arities_by_default(self, make_config):
        """Test that a lower suction demand wins even when it needs more modules."""
        two = make_config("2P-0000", [[0, 0], [100, 0]])
        three = make_config("3P-0000", [[0, 0], [100, 0], [50, 100]])
        sweeps = {"2P-0000": {"S0": _sweep(-4.0)}, "3P-0000": {"S0": _sweep(-1.0)}}

        plan = rank_configs([two, three], sweeps)

        assert plan.configs[0].config_id == "3P-0000"
        assert plan.best(2).config.config_id == "2P-0000"

    def test_fewest_modules_preference(self, make_config):
        """Test that a feasible 2P outranks a better 3P when fewest modules is preferred."""
        two = make_config("2P-0000", [[0, 0], [100, 0]])
        three = make_config("3P-0000", [[0, 0], [100, 0], [50, 100]])
        sweeps = {"2P-0000": {"S0": _sweep(-4.0)}, "3P-0000": {"S0": _sweep(-1.0)}}

        plan = rank_configs([three, two], sweeps, prefer_fewest_modules=True)

        assert plan.configs[0].config_id == "2P-0000"

    def test_missing_sweep_or_com_outside_is_infeasible(self, make_config):
        """Test that an unswept or COM-outside configuration cannot be feasible."""
        unswept = make_config("3P-0000", [[0, 0], [100, 0], [0, 100]])
        outside = make_config("3P-0001", [[0, 0], [100, 0], [50, 100]], com_inside=False)

        plan = rank_configs([unswept, outside], {"3P-0001": {"S0": _sweep(1.0)}})

        assert plan.feasible == []
        assert plan.find("3P-0000").score.worst_suction_demand == float("inf")

    def test_records(self, make_config):
        """Test the JSON records of a ranked plan."""
        config = make_config("3P-0000", [[0, 0], [100, 0], [50, 100]])
        plan = rank_configs([config], {"3P-0000": {"S0": _sweep(-1.0), "S1": _sweep(-9.0)}})

        (record,) = configs_to_records(plan)

        assert record["config_id"] == "3P-0000"
        assert record["rank"] == 1
        assert record["arity"] == 3
        assert record["feasible"] is False
        assert record["critical_press_N"] == {"S0": None, "S1": 0.0}
        assert record["worst_suction_demand_N"] == pytest.approx(9.0)
        assert len(record["contacts_mm"]) == 3
