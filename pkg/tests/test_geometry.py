import math
import random

import numpy as np
import pytest

from stagetrack.errors import CoincidentPoint, DegenerateGeometry
from stagetrack.geometry import Anchor, Box, StageConfig, Vec3, coverage_map, dop

from conftest import rectangle_anchors


def oracle_hdop(anchor_xy, point_xy):
    """Independent planar HDOP: unit sightline rows plus a shared ranging-bias
    column, inverted without going through the library code path."""
    rows = []
    for ax, ay in anchor_xy:
        dx, dy = ax - point_xy[0], ay - point_xy[1]
        n = math.hypot(dx, dy)
        rows.append([dx / n, dy / n, 1.0])
    h = np.array(rows)
    q = np.linalg.inv(h.T @ h)
    return math.sqrt(q[0, 0] + q[1, 1])


UNIT_SQUARE = [Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(1, 1, 1), Vec3(0, 1, 1)]


class TestDop:
    def test_unit_square_center_hdop_is_one(self):
        # Symmetric point: the 2x2 position block of the normal matrix is 2*I
        # and decouples from the bias term, so hdop = sqrt(0.5 + 0.5).
        result = dop(UNIT_SQUARE, Vec3(0.5, 0.5, 0), "planar")
        assert result.hdop == pytest.approx(1.0, abs=1e-9)

    def test_collinear_anchors_far_point_degenerate(self):
        anchors = [Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(2, 0, 1)]
        with pytest.raises(DegenerateGeometry):
            dop(anchors, Vec3(1.0, 1e9, 0), "planar")

    def test_point_on_anchor_line_degenerate(self):
        anchors = [Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)]
        with pytest.raises(DegenerateGeometry):
            dop(anchors, Vec3(5.0, 0.0, 0.0), "planar")

    def test_outside_hull_worse_than_center(self):
        center = dop(UNIT_SQUARE, Vec3(0.5, 0.5, 0), "planar").hdop
        outside = dop(UNIT_SQUARE, Vec3(5, 5, 0), "planar").hdop
        assert outside > center

    def test_matches_independent_oracle(self):
        rnd = random.Random(11)
        anchors = [a.position for a in rectangle_anchors(7.55, 5.70)]
        xy = [(a.x, a.y) for a in anchors]
        for _ in range(50):
            p = Vec3(rnd.uniform(0.1, 10.3), rnd.uniform(0.1, 10.3), 1.0)
            expected = oracle_hdop(xy, (p.x, p.y))
            assert dop(anchors, p, "planar").hdop == pytest.approx(expected, rel=1e-9)

    def test_translation_invariance(self):
        rnd = random.Random(3)
        anchors = [a.position for a in rectangle_anchors(7.55, 5.70)]
        point = Vec3(1.0, 2.0, 0.5)
        base = dop(anchors, point, "planar").hdop
        for _ in range(20):
            shift = Vec3(rnd.uniform(-50, 50), rnd.uniform(-50, 50), rnd.uniform(-5, 5))
            moved = [Vec3(a.x + shift.x, a.y + shift.y, a.z + shift.z) for a in anchors]
            p = Vec3(point.x + shift.x, point.y + shift.y, point.z + shift.z)
            assert dop(moved, p, "planar").hdop == pytest.approx(base, abs=1e-9)

    def test_centroid_beats_points_outside_hull(self):
        rnd = random.Random(5)
        for n in (3, 4, 5, 6):
            anchors = [
                Vec3(5 + 2 * math.cos(2 * math.pi * k / n), 5 + 2 * math.sin(2 * math.pi * k / n), 3.0)
                for k in range(n)
            ]
            centroid = dop(anchors, Vec3(5, 5, 0), "planar").hdop
            for _ in range(30):
                angle = rnd.uniform(0, 2 * math.pi)
                radius = rnd.uniform(2.5, 15.0)
                p = Vec3(5 + radius * math.cos(angle), 5 + radius * math.sin(angle), 0)
                assert dop(anchors, p, "planar").hdop >= centroid

    def test_full3d_gdop_at_least_hdop(self):
        anchors = [Vec3(0, 0, 3), Vec3(7, 0, 2.5), Vec3(7, 6, 3.5), Vec3(0, 6, 2.0), Vec3(3, 3, 4.0)]
        result = dop(anchors, Vec3(3.5, 3.0, 1.0), "full3d")
        assert result.vdop is not None
        assert result.gdop >= result.hdop

    def test_coincident_point_raises(self):
        with pytest.raises(CoincidentPoint):
            dop(UNIT_SQUARE, Vec3(0, 0, 1), "planar")

    def test_minimum_anchor_counts(self):
        with pytest.raises(DegenerateGeometry):
            dop(UNIT_SQUARE[:2], Vec3(0.5, 0.5, 0), "planar")
        with pytest.raises(DegenerateGeometry):
            dop(UNIT_SQUARE[:3], Vec3(0.5, 0.5, 0), "full3d")

    def test_anchor_overhead_planar_degenerate(self):
        anchors = [Vec3(0.5, 0.5, 3.0), Vec3(1, 0, 3), Vec3(0, 1, 3)]
        with pytest.raises(DegenerateGeometry):
            dop(anchors, Vec3(0.5, 0.5, 0.0), "planar")


class TestCoverage:
    def test_small_square_does_not_cover_stage(self, small_square_stage):
        grid = coverage_map(small_square_stage, 0.25, hdop_max=6.0, min_anchors=3)
        assert grid.covered_fraction < 1.0

    def test_rectangle_beats_small_square(self, paper_rectangle_stage, small_square_stage):
        rect = coverage_map(paper_rectangle_stage, 0.25, hdop_max=6.0, min_anchors=3)
        square = coverage_map(small_square_stage, 0.25, hdop_max=6.0, min_anchors=3)
        assert rect.covered_fraction > square.covered_fraction

    def test_zero_range_anchors_cover_nothing(self):
        anchors = [
            Anchor(a.id, a.position, max_range=1e-9) for a in rectangle_anchors(7.55, 5.70)
        ]
        grid = coverage_map(StageConfig(anchors=anchors), 0.5)
        assert grid.covered_fraction == 0.0

    def test_grid_dimensions_use_ceiling(self, paper_rectangle_stage):
        grid = coverage_map(paper_rectangle_stage, 0.25)
        assert (grid.nx, grid.ny) == (42, 42)
        grid = coverage_map(paper_rectangle_stage, 3.0)
        assert (grid.nx, grid.ny) == (4, 4)

    def test_monotone_in_hdop_threshold_and_min_anchors(self, small_square_stage):
        fractions = [
            coverage_map(small_square_stage, 0.5, hdop_max=h).covered_fraction
            for h in (10.0, 6.0, 3.0, 1.5)
        ]
        assert fractions == sorted(fractions, reverse=True)
        by_anchors = [
            coverage_map(small_square_stage, 0.5, min_anchors=m).covered_fraction
            for m in (3, 4)
        ]
        assert by_anchors[1] <= by_anchors[0]

    def test_covered_fraction_matches_cells(self, small_square_stage):
        grid = coverage_map(small_square_stage, 0.5)
        covered = sum(1 for _, _, _, _, c in grid.csv_rows() if c)
        assert grid.covered_fraction == pytest.approx(covered / (grid.nx * grid.ny))

    def test_degenerate_cells_marked_uncovered_without_abort(self):
        # Anchors stacked on one vertical: every cell sees parallel in-plane
        # sightlines, so planar DOP is singular everywhere.
        anchors = [Anchor(i, Vec3(5.0, 5.0, 2.0 + i)) for i in range(3)]
        grid = coverage_map(StageConfig(anchors=anchors), 1.0)
        assert grid.covered_fraction == 0.0
        assert all(hdop is None for _, _, _, hdop, _ in grid.csv_rows())

    def test_parameter_validation(self, paper_rectangle_stage):
        with pytest.raises(ValueError):
            coverage_map(paper_rectangle_stage, 0.0)
        with pytest.raises(ValueError):
            coverage_map(paper_rectangle_stage, 0.5, min_anchors=2)


class TestTypes:
    def test_vec3_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Vec3(float("nan"), 0, 0)
        with pytest.raises(ValueError):
            Vec3(0, float("inf"), 0)

    def test_anchor_validation(self):
        with pytest.raises(ValueError):
            Anchor(0, Vec3(0, 0, 0), max_range=0.0)

    def test_stage_rejects_duplicate_anchor_ids(self):
        anchors = [Anchor(1, Vec3(0, 0, 3)), Anchor(1, Vec3(1, 0, 3))]
        with pytest.raises(ValueError):
            StageConfig(anchors=anchors)

    def test_box_orders_corners(self):
        with pytest.raises(ValueError):
            Box(min=Vec3(1, 0, 0), max=Vec3(0, 1, 1))

    def test_stage_dimension_validation(self):
        with pytest.raises(ValueError):
            StageConfig(width=0.0)
