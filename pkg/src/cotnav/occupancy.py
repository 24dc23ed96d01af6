"""Tri-state obstacle map built from depth scans.

Cells are addressed ``(row, col)`` and stored in a ``(height, width)``
array. Poses live in continuous cell coordinates: ``x`` runs along columns,
``y`` along rows, heading 0 points toward +x and positive headings turn
toward +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .raycast import T_TOL, march, wrap_angle


class CellState(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OBSTACLE = 2


# Grayscale levels used for PGM export.
PGM_LEVELS = {CellState.UNKNOWN: 127, CellState.FREE: 255, CellState.OBSTACLE: 0}


class OutOfBoundsError(ValueError):
    """A pose or cell lies outside the grid."""


@dataclass(frozen=True)
class GridPose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError(f"non-finite pose {self.x}, {self.y}, {self.heading}")
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def cell(self) -> tuple[int, int]:
        """Containing cell as ``(row, col)``."""
        return math.floor(self.y), math.floor(self.x)

    def distance_to(self, other: GridPose) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.heading]


@dataclass
class DepthScan:
    """One fan of depth rays; ``angles`` are relative to the pose heading."""

    angles: np.ndarray
    ranges: np.ndarray
    hits: np.ndarray
    max_range: float

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.ranges = np.asarray(self.ranges, dtype=float)
        self.hits = np.asarray(self.hits, dtype=bool)
        if not (self.angles.shape == self.ranges.shape == self.hits.shape):
            raise ValueError("angles, ranges and hits must have equal length")
        if self.ranges.size and (self.ranges.min() <= 0 or self.ranges.max() > self.max_range + 1e-9):
            raise ValueError("ranges must lie in (0, max_range]")

    def __len__(self):
        return self.angles.size


def world_to_cell(point, resolution: float) -> tuple[int, int]:
    """Metric point ``(x, y)`` to the containing cell index ``(ix, iy)``.

    Note the order: this returns column first, matching the point's
    ``(x, y)`` order. Grid arrays are indexed ``[iy, ix]``.
    """
    x, y = point[0], point[1]
    # tiny bias so 0.3 / 0.1 lands in cell 3 rather than 2.9999...
    return math.floor(x / resolution + 1e-9), math.floor(y / resolution + 1e-9)


def cell_to_world(cell, resolution: float) -> tuple[float, float]:
    """Cell index ``(ix, iy)`` to the metric center of that cell."""
    return (cell[0] + 0.5) * resolution, (cell[1] + 0.5) * resolution


@dataclass
class OccupancyGrid:
    width: int
    height: int
    resolution: float = 0.1
    cells: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.cells is None:
            self.cells = np.full((self.height, self.width), CellState.UNKNOWN, dtype=np.uint8)
        elif self.cells.shape != (self.height, self.width):
            raise ValueError("cells shape does not match grid dimensions")

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def state(self, row: int, col: int) -> CellState:
        return CellState(int(self.cells[row, col]))

    @property
    def obstacle(self) -> np.ndarray:
        return self.cells == CellState.OBSTACLE

    @property
    def free(self) -> np.ndarray:
        return self.cells == CellState.FREE

    @property
    def unknown(self) -> np.ndarray:
        return self.cells == CellState.UNKNOWN

    def count(self, state: CellState) -> int:
        return int(np.count_nonzero(self.cells == state))

    def mark_free(self, rows, cols):
        """Mark cells Free without demoting Obstacles."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        keep = self.cells[rows, cols] == CellState.UNKNOWN
        self.cells[rows[keep], cols[keep]] = CellState.FREE

    def mark_obstacle(self, rows, cols):
        self.cells[np.asarray(rows), np.asarray(cols)] = CellState.OBSTACLE

    def copy(self) -> OccupancyGrid:
        return OccupancyGrid(self.width, self.height, self.resolution, self.cells.copy())

    def to_image(self) -> np.ndarray:
        img = np.empty(self.cells.shape, dtype=np.uint8)
        for state, level in PGM_LEVELS.items():
            img[self.cells == state] = level
        return img

    def save_pgm(self, path: str | Path):
        from .render import save_gray

        save_gray(self.to_image(), path)


def integrate_depth(grid: OccupancyGrid, pose: GridPose, scan: DepthScan) -> OccupancyGrid:
    """Carve a depth scan into ``grid`` in place and return it.

    Each ray frees the cells it passes through; a ray that reports a hit
    marks its terminal cell as Obstacle. Free never overwrites Obstacle, so
    the update is order independent and idempotent.
    """
    if not grid.contains(pose.x, pose.y):
        raise OutOfBoundsError(f"pose ({pose.x:.3f}, {pose.y:.3f}) outside {grid.width}x{grid.height} grid")
    n = len(scan)
    if n == 0:
        return grid

    ranges = scan.ranges / grid.resolution
    res = march(pose.x, pose.y, pose.heading + scan.angles, ranges, grid.shape)
    if res.ray.size == 0:
        return grid

    # A hit ray's terminal cell is its last visited cell, provided the march
    # actually reached the reported range (it may leave the grid first).
    last = res.last_index(n)
    hit_rays = np.nonzero(scan.hits & (last >= 0))[0]
    reached = res.t[last[hit_rays]] <= ranges[hit_rays] + T_TOL
    reached &= res.complete[hit_rays]
    terminal = last[hit_rays[reached]]

    free_mask = np.ones(res.ray.size, dtype=bool)
    free_mask[terminal] = False
    grid.mark_free(res.row[free_mask], res.col[free_mask])
    grid.mark_obstacle(res.row[terminal], res.col[terminal])
    return grid
