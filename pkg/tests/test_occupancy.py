import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotnav.occupancy import (CellState, DepthScan, GridPose, OccupancyGrid, OutOfBoundsError,
                              cell_to_world, integrate_depth, world_to_cell)

U, F, O = CellState.UNKNOWN, CellState.FREE, CellState.OBSTACLE


def single_ray(range_m, hit=True, max_range=5.0, angle=0.0):
    return DepthScan([angle], [range_m], [hit], max_range)


def test_world_to_cell_examples():
    assert world_to_cell((0.0, 0.0), 0.1) == (0, 0)
    assert world_to_cell((0.25, 0.19), 0.1) == (2, 1)
    assert world_to_cell(cell_to_world((5, 7), 0.1), 0.1) == (5, 7)


@given(st.integers(0, 500), st.integers(0, 500), st.sampled_from([0.05, 0.1, 0.2, 0.25, 1.0]))
def test_cell_world_round_trip(ix, iy, res):
    assert world_to_cell(cell_to_world((ix, iy), res), res) == (ix, iy)


def test_pose_heading_normalized():
    assert GridPose(1, 1, math.pi).heading == pytest.approx(-math.pi)
    assert GridPose(1, 1, 3 * math.pi / 2).heading == pytest.approx(-math.pi / 2)
    with pytest.raises(ValueError):
        GridPose(float("nan"), 0.0)


def test_depth_scan_validation():
    with pytest.raises(ValueError):
        DepthScan([0.0, 0.1], [1.0], [True], 5.0)
    with pytest.raises(ValueError):
        DepthScan([0.0], [0.0], [True], 5.0)
    with pytest.raises(ValueError):
        DepthScan([0.0], [5.5], [False], 5.0)


def test_single_ray_hitting_wall_three_cells_ahead():
    # center of an 11x11 grid, wall in the third cell ahead; its near face
    # is 2.5 cells (0.25 m) away
    grid = OccupancyGrid(11, 11, 0.1)
    integrate_depth(grid, GridPose(5.5, 5.5, 0.0), single_ray(0.25))
    row = grid.cells[5]
    assert row[6] == F and row[7] == F  # the two cells in between
    assert row[8] == O
    assert row[5] == F  # the agent's own cell
    assert grid.count(O) == 1 and grid.count(F) == 3
    assert (row[9:] == U).all()


def test_miss_ray_frees_to_max_range():
    grid = OccupancyGrid(20, 3, 0.1)
    integrate_depth(grid, GridPose(0.5, 1.5, 0.0), single_ray(0.5, hit=False, max_range=0.5))
    assert (grid.cells[1, :6] == F).all()
    assert (grid.cells[1, 6:] == U).all()
    assert grid.count(O) == 0


def test_zero_rays_leave_grid_unchanged():
    grid = OccupancyGrid(5, 5)
    before = grid.cells.copy()
    integrate_depth(grid, GridPose(2.5, 2.5), DepthScan([], [], [], 5.0))
    assert np.array_equal(before, grid.cells)


def test_pose_outside_grid_rejected():
    with pytest.raises(OutOfBoundsError):
        integrate_depth(OccupancyGrid(5, 5), GridPose(7.0, 1.0), single_ray(0.1))


def random_scan(rng, n=15):
    angles = np.sort(rng.uniform(-0.7, 0.7, n))
    ranges = rng.uniform(0.05, 1.0, n)
    return DepthScan(angles, ranges, rng.random(n) < 0.6, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_integrate_is_idempotent_and_monotone(seed):
    rng = np.random.default_rng(seed)
    grid = OccupancyGrid(24, 24, 0.1)
    obstacles = 0
    for _ in range(4):
        pose = GridPose(rng.uniform(1, 23), rng.uniform(1, 23), rng.uniform(-math.pi, math.pi))
        scan = random_scan(rng)
        before = grid.cells.copy()
        integrate_depth(grid, pose, scan)
        once = grid.cells.copy()
        integrate_depth(grid, pose, scan)
        assert np.array_equal(once, grid.cells)
        # Obstacles are never demoted; Free never reverts to Unknown
        assert (once[before == O] == O).all()
        assert (once[before == F] != U).all()
        assert grid.count(O) >= obstacles
        obstacles = grid.count(O)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_rays_never_touch_cells_beyond_their_hit(seed):
    rng = np.random.default_rng(seed)
    grid = OccupancyGrid(30, 30, 0.1)
    pose = GridPose(15.5, 15.5, rng.uniform(-math.pi, math.pi))
    ang = rng.uniform(-0.6, 0.6)
    rng_m = rng.uniform(0.05, 1.2)
    integrate_depth(grid, pose, DepthScan([ang], [rng_m], [True], 1.5))
    from cotnav.raycast import traverse
    cells = traverse(pose.x, pose.y, pose.heading + ang, 40.0, 30, 30)
    r_cells = rng_m / 0.1
    for c, r, t in cells:
        if t > r_cells + 1e-6:
            assert grid.cells[r, c] == U


def test_pgm_export_levels(tmp_path):
    grid = OccupancyGrid(3, 1)
    grid.cells[0] = [U, F, O]
    path = tmp_path / "g.pgm"
    grid.save_pgm(path)
    data = path.read_bytes()
    assert data.startswith(b"P5")
    assert data[-3:] == bytes([127, 255, 0])
