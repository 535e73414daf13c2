import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from diagnet.core.common import Diagonal, TargetMode
from diagnet.core.geometry import (
    BBox,
    PatchGrid,
    build_hard_targets,
    build_soft_targets,
    build_targets,
    degree_normalize,
    diag_distance,
    point_segment_distance,
    soft_membership,
    threshold_delta,
)
from diagnet.exceptions import ConfigException, ShapeException, TargetException


def random_box(rng, h_in):
    x1, y1 = rng.uniform(0, h_in - 2, size=2)
    x2 = rng.uniform(x1 + 1, h_in)
    y2 = rng.uniform(y1 + 1, h_in)
    return BBox(x1, y1, x2, y2)


def sampled_distance(point, a, b, samples=100_000):
    t = np.linspace(0.0, 1.0, samples)[:, None]
    segment = np.asarray(a) + t * (np.asarray(b) - np.asarray(a))
    return np.min(np.hypot(segment[:, 0] - point[0], segment[:, 1] - point[1]))


def test_patch_grid():
    grid = PatchGrid(64, 8)
    assert grid.patch_size == 8
    assert grid.n == 64
    assert grid.node_center(0) == (4.0, 4.0)
    assert grid.node_center(9) == (12.0, 12.0)
    assert grid.node_center(7) == (60.0, 4.0)


def test_patch_grid_rejects_indivisible_sizes():
    with pytest.raises(ConfigException):
        PatchGrid(30, 4)


def test_bbox_rejects_degenerate_boxes():
    with pytest.raises(ShapeException):
        BBox(5, 5, 5, 10)


def test_threshold_delta():
    assert abs(threshold_delta(PatchGrid(448, 28)) - 8 * math.sqrt(2)) < 1e-12
    assert abs(threshold_delta(PatchGrid(2, 1)) - math.sqrt(2)) < 1e-12
    assert abs(threshold_delta(PatchGrid(64, 8)) - 4 * math.sqrt(2)) < 1e-12


def test_diag_distance_at_box_center():
    grid = PatchGrid(64, 8)
    # node 27 is (row 3, col 3), centered at (28, 28)
    centered = BBox(20, 20, 36, 36)
    assert diag_distance(grid, centered, 27, Diagonal.MAIN) == 0.0
    assert diag_distance(grid, centered, 27, Diagonal.ANTI) == 0.0


def test_diag_distance_at_corner():
    grid = PatchGrid(64, 8)
    box = BBox(4, 4, 20, 20)
    assert diag_distance(grid, box, 0, Diagonal.MAIN) == 0.0
    half_diagonal = math.hypot(16, 16) / 2
    assert abs(diag_distance(grid, box, 0, Diagonal.ANTI) - half_diagonal) < 1e-12


def test_diag_distance_matches_dense_sampling(rng, grid):
    for _ in range(20):
        box = random_box(rng, grid.h_in)
        node = int(rng.integers(grid.n))
        for diagonal in (Diagonal.MAIN, Diagonal.ANTI):
            a, b = box.diagonal_segment(diagonal)
            expected = sampled_distance(grid.node_center(node), a, b)
            assert abs(diag_distance(grid, box, node, diagonal) - expected) < 1e-3


def test_diag_distance_ignores_endpoint_order(rng, grid):
    for _ in range(20):
        box = random_box(rng, grid.h_in)
        a, b = box.diagonal_segment(Diagonal.MAIN)
        centers = grid.node_centers()
        assert_allclose(point_segment_distance(centers, a, b), point_segment_distance(centers, b, a), atol=1e-12)


def test_soft_membership():
    assert soft_membership(0.0, 1.0, 1.0) == 1.0
    assert abs(soft_membership(128.0, 8 * math.sqrt(2), 1.0) - math.exp(-1)) < 1e-12


def test_soft_membership_is_monotone(rng):
    d = np.sort(rng.uniform(0, 50, size=100))
    phi = soft_membership(d, 4 * math.sqrt(2), 1.0)
    assert np.all(np.diff(phi) <= 0)
    assert np.all((phi > 0) & (phi <= 1))


def test_soft_membership_rejects_non_positive_alpha():
    with pytest.raises(ConfigException):
        soft_membership(1.0, 1.0, 0.0)


def test_hard_targets_full_image_box():
    grid = PatchGrid(4, 2)
    targets = build_hard_targets(grid, [BBox(0, 0, 4, 4)])
    assert_array_equal(targets.a_diag, np.ones((4, 4)))
    assert_array_equal(targets.a_perp, np.zeros((4, 4)))
    assert targets.mode == TargetMode.HARD


def test_hard_targets_distant_box():
    grid = PatchGrid(64, 8)
    # every in-image point is within delta of some node center, so the box sits outside the grid
    targets = build_hard_targets(grid, [BBox(100, 100, 101, 101)])
    assert_array_equal(targets.a_diag, np.zeros((64, 64)))
    assert_array_equal(targets.a_perp, np.ones((64, 64)))


def test_hard_targets_match_double_loop(rng):
    for h in (2, 4, 8):
        grid = PatchGrid(8 * h, h)
        delta = threshold_delta(grid)
        for _ in range(200 // 3):
            box = random_box(rng, grid.h_in)
            targets = build_hard_targets(grid, [box])
            d = [diag_distance(grid, box, i, Diagonal.MAIN) for i in range(grid.n)]
            for i in range(grid.n):
                for j in range(grid.n):
                    inside = d[i] <= delta and d[j] <= delta
                    outside = d[i] > delta and d[j] > delta
                    assert targets.a_diag[i, j] == (1.0 if inside else 0.0)
                    assert targets.a_perp[i, j] == (1.0 if outside else 0.0)


def test_hard_targets_are_disjoint_and_symmetric(rng, grid):
    boxes = [random_box(rng, grid.h_in) for _ in range(3)]
    targets = build_hard_targets(grid, boxes, Diagonal.BOTH)
    assert_array_equal(targets.a_diag, targets.a_diag.T)
    assert_array_equal(targets.a_perp, targets.a_perp.T)
    assert np.all(targets.a_diag * targets.a_perp == 0)
    assert set(np.unique(targets.a_diag)) <= {0.0, 1.0}


def test_multi_box_composition(grid):
    first, second = BBox(0, 0, 24, 24), BBox(40, 40, 64, 64)
    combined = build_hard_targets(grid, [first, second])
    a = build_hard_targets(grid, [first])
    b = build_hard_targets(grid, [second])
    assert_array_equal(combined.a_diag, np.maximum(a.a_diag, b.a_diag))
    assert_array_equal(combined.a_perp, np.minimum(a.a_perp, b.a_perp))


def test_both_diagonals_is_union(grid, box):
    main = build_hard_targets(grid, [box], Diagonal.MAIN)
    anti = build_hard_targets(grid, [box], Diagonal.ANTI)
    both = build_hard_targets(grid, [box], Diagonal.BOTH)
    members = lambda t: np.diag(t.a_diag) > 0
    assert_array_equal(members(both), members(main) | members(anti))


def test_soft_targets_are_rank_one(rng, grid):
    for _ in range(10):
        targets = build_soft_targets(grid, [random_box(rng, grid.h_in)], alpha=1.0)
        phi = np.sqrt(np.diag(targets.a_diag))
        assert_allclose(targets.a_diag, np.outer(phi, phi), atol=1e-12)
        assert_allclose(targets.a_perp, np.outer(1 - phi, 1 - phi), atol=1e-12)
        assert np.all(targets.a_diag + targets.a_perp <= 1 + 1e-12)
        assert np.all((targets.a_diag >= 0) & (targets.a_diag <= 1))
        assert np.linalg.eigvalsh(targets.a_diag).min() >= -1e-9


def test_soft_targets_on_diagonal_node(grid):
    # node 9 is centered at (12, 12), on the main diagonal
    targets = build_soft_targets(grid, [BBox(0, 0, 64, 64)], alpha=1.0)
    assert targets.a_diag[9, 9] == 1.0
    assert targets.a_perp[9, 9] == 0.0
    assert targets.alpha == 1.0


def test_soft_targets_wide_alpha(grid, box):
    targets = build_soft_targets(grid, [box], alpha=100.0)
    assert targets.a_diag.min() > 0.99


def test_targets_need_boxes(grid):
    with pytest.raises(TargetException):
        build_targets(grid, [], TargetMode.HARD)


def test_degree_normalize(rng):
    assert_allclose(degree_normalize(np.ones((3, 3))), np.full((3, 3), 1 / 3))
    assert_array_equal(degree_normalize(np.zeros((3, 3))), np.zeros((3, 3)))

    a = rng.uniform(size=(6, 6))
    a[2] = 0
    sums = degree_normalize(a).sum(axis=1)
    assert_allclose(np.delete(sums, 2), np.ones(5), atol=1e-12)
    assert sums[2] == 0
