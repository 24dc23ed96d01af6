"""8-connected shortest paths on occupancy grids.

Moves cost 1 (orthogonal) or sqrt(2) (diagonal), scaled by the cost of the
cell being entered. Diagonal moves may not cut an Obstacle corner. Backed
by scipy's compiled Dijkstra; the graph is rebuilt per query since the map
changes every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .occupancy import CellState, GridPose, OccupancyGrid

SQRT2 = math.sqrt(2.0)
_MOVES = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
          (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2)]


class PathError(RuntimeError):
    """No path exists between the requested cells."""


def _build_graph(passable: np.ndarray, cost: np.ndarray) -> csr_matrix:
    h, w = passable.shape
    idx = np.arange(h * w).reshape(h, w)
    src_all, dst_all, wt_all = [], [], []
    for dr, dc, length in _MOVES:
        rs = slice(max(0, -dr), h - max(0, dr))
        cs = slice(max(0, -dc), w - max(0, dc))
        rd = slice(max(0, dr), h - max(0, -dr))
        cd = slice(max(0, dc), w - max(0, -dc))
        ok = passable[rs, cs] & passable[rd, cd]
        if dr and dc:
            ok &= passable[rd, cs] & passable[rs, cd]
        src_all.append(idx[rs, cs][ok])
        dst_all.append(idx[rd, cd][ok])
        wt_all.append(length * cost[rd, cd][ok])
    src = np.concatenate(src_all)
    dst = np.concatenate(dst_all)
    wt = np.concatenate(wt_all)
    return csr_matrix((wt, (src, dst)), shape=(h * w, h * w))


@dataclass
class DistanceField:
    """Single-source shortest path tree over a grid."""

    source: tuple[int, int]
    dist: np.ndarray  # (h, w), inf where unreachable
    pred: np.ndarray  # (h*w,), -9999 where none

    def reachable(self, cell: tuple[int, int]) -> bool:
        return bool(np.isfinite(self.dist[cell]))

    def path_to(self, cell: tuple[int, int]) -> list[tuple[int, int]]:
        if not self.reachable(cell):
            raise PathError(f"{cell} unreachable from {self.source}")
        w = self.dist.shape[1]
        node = cell[0] * w + cell[1]
        src = self.source[0] * w + self.source[1]
        out = [cell]
        while node != src:
            node = int(self.pred[node])
            out.append(divmod(node, w))
        out.reverse()
        return [(int(r), int(c)) for r, c in out]


def cost_grid(grid: OccupancyGrid, unknown_penalty: float = 2.0,
              clearance_penalty: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Passability mask and per-cell entry cost for a known map."""
    passable = grid.cells != CellState.OBSTACLE
    cost = np.where(grid.cells == CellState.UNKNOWN, unknown_penalty, 1.0)
    if clearance_penalty:
        near = ndimage.binary_dilation(~passable, structure=np.ones((3, 3), dtype=bool))
        cost = cost + clearance_penalty * (near & passable)
    return passable, cost


def distance_field(passable: np.ndarray, cost: np.ndarray, source: tuple[int, int]) -> DistanceField:
    h, w = passable.shape
    r, c = source
    if not (0 <= r < h and 0 <= c < w) or not passable[r, c]:
        raise PathError(f"source {source} is not traversable")
    graph = _build_graph(passable, cost)
    dist, pred = dijkstra(graph, directed=True, indices=r * w + c, return_predecessors=True)
    return DistanceField((r, c), dist.reshape(h, w), pred)


def plan_path(grid: OccupancyGrid, start: GridPose | tuple[int, int], goal: tuple[int, int],
              unknown_penalty: float = 2.0, clearance_penalty: float = 0.0) -> list[tuple[int, int]]:
    """Cheapest 8-connected path from ``start`` to ``goal`` as (row, col) cells.

    Obstacles are impassable; Unknown cells cost ``unknown_penalty`` times
    a Free cell. Raises :class:`PathError` when the goal cannot be reached.
    """
    src = start.cell if isinstance(start, GridPose) else tuple(start)
    passable, cost = cost_grid(grid, unknown_penalty, clearance_penalty)
    if not passable[goal]:
        raise PathError(f"goal {goal} is an obstacle")
    return distance_field(passable, cost, src).path_to(tuple(goal))


def path_cost(path: list[tuple[int, int]], grid: OccupancyGrid, unknown_penalty: float = 2.0) -> float:
    total = 0.0
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        step = SQRT2 if (r0 != r1 and c0 != c1) else 1.0
        total += step * (unknown_penalty if grid.cells[r1, c1] == CellState.UNKNOWN else 1.0)
    return total
