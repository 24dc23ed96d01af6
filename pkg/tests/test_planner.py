import heapq
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotnav.occupancy import CellState, GridPose, OccupancyGrid
from cotnav.planner import PathError, cost_grid, distance_field, path_cost, plan_path

U, F, O = CellState.UNKNOWN, CellState.FREE, CellState.OBSTACLE


def reference_dijkstra(cells, source, unknown_penalty=2.0):
    """Plain heapq Dijkstra with the same move and corner rules."""
    h, w = cells.shape
    passable = cells != O
    dist = {source: 0.0}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if (r, c) in done:
            continue
        done.add((r, c))
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if not dr and not dc:
                    continue
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w) or not passable[rr, cc]:
                    continue
                if dr and dc and not (passable[r, cc] and passable[rr, c]):
                    continue
                step = math.sqrt(2) if dr and dc else 1.0
                nd = d + step * (unknown_penalty if cells[rr, cc] == U else 1.0)
                if nd < dist.get((rr, cc), math.inf) - 1e-12:
                    dist[(rr, cc)] = nd
                    heapq.heappush(heap, (nd, (rr, cc)))
    return dist


def grid_of(cells):
    cells = np.asarray(cells, dtype=np.uint8)
    return OccupancyGrid(cells.shape[1], cells.shape[0], 0.1, cells)


def test_straight_corridor():
    cells = np.full((3, 7), O)
    cells[1, 1:6] = F
    path = plan_path(grid_of(cells), (1, 1), (1, 5))
    assert path == [(1, c) for c in range(1, 6)]
    assert path_cost(path, grid_of(cells)) == 4.0


def test_walled_off_goal():
    cells = np.full((5, 7), F)
    cells[:, 3] = O
    with pytest.raises(PathError):
        plan_path(grid_of(cells), (2, 1), (2, 5))
    with pytest.raises(PathError):
        plan_path(grid_of(cells), (2, 1), (2, 3))


def test_l_shape_hugs_corner():
    cells = np.full((7, 7), O)
    cells[1:6, 1] = F  # down the left side
    cells[5, 1:6] = F  # across the bottom
    cells[4, 2] = F    # widen the elbow so the corner can be cut
    g = grid_of(cells)
    path = plan_path(g, (1, 1), (5, 5))
    ref = reference_dijkstra(g.cells, (1, 1))
    assert path_cost(path, g) == pytest.approx(ref[(5, 5)])
    # Manhattan 8, one diagonal saves 2 - sqrt(2)
    assert ref[(5, 5)] == pytest.approx(8 - (2 - math.sqrt(2)))


def test_no_corner_cutting():
    cells = np.array([[F, O], [O, F]])
    with pytest.raises(PathError):
        plan_path(grid_of(cells), (0, 0), (1, 1))


def test_unknown_penalty_steers_around():
    cells = np.full((3, 5), F)
    cells[1, 1:4] = U
    path = plan_path(grid_of(cells), (1, 0), (1, 4), unknown_penalty=5.0)
    assert all(grid_of(cells).cells[p] == F for p in path)


def test_pose_start_uses_its_cell():
    cells = np.full((4, 4), F)
    assert plan_path(grid_of(cells), GridPose(0.5, 2.5), (2, 3))[0] == (2, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([1.0, 2.0, 3.5]))
def test_distance_field_matches_reference(seed, penalty):
    rng = np.random.default_rng(seed)
    cells = rng.choice([F, U, O], size=(16, 18), p=[0.55, 0.2, 0.25]).astype(np.uint8)
    cells[0, 0] = F
    g = grid_of(cells)
    passable, cost = cost_grid(g, penalty)
    field = distance_field(passable, cost, (0, 0))
    ref = reference_dijkstra(cells, (0, 0), penalty)
    for r in range(16):
        for c in range(18):
            if (r, c) in ref:
                assert field.dist[r, c] == pytest.approx(ref[(r, c)], abs=1e-9)
                path = field.path_to((r, c))
                assert path[0] == (0, 0) and path[-1] == (r, c)
                assert path_cost(path, g, penalty) == pytest.approx(ref[(r, c)], abs=1e-9)
                assert all(cells[p] != O for p in path)
            else:
                assert not field.reachable((r, c))


def test_clearance_penalty_only_raises_costs_near_walls():
    cells = np.full((5, 5), F)
    cells[2, 2] = O
    passable, cost = cost_grid(grid_of(cells), 2.0, clearance_penalty=3.0)
    assert not passable[2, 2]
    assert cost[1, 1] == 4.0 and cost[0, 0] == 1.0
