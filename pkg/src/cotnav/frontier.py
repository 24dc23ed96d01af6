"""Frontier extraction: Free cells that touch Unknown space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .occupancy import CellState, OccupancyGrid

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Frontier:
    cells: tuple[tuple[int, int], ...]
    midpoint: tuple[int, int]

    def __len__(self):
        return len(self.cells)


def frontier_mask(cells: np.ndarray) -> np.ndarray:
    """Free cells with at least one 4-neighbour that is Unknown."""
    unknown = cells == CellState.UNKNOWN
    near = np.zeros_like(unknown)
    near[1:, :] |= unknown[:-1, :]
    near[:-1, :] |= unknown[1:, :]
    near[:, 1:] |= unknown[:, :-1]
    near[:, :-1] |= unknown[:, 1:]
    return (cells == CellState.FREE) & near


def _midpoint(rows: np.ndarray, cols: np.ndarray) -> tuple[int, int]:
    # Compare n^2 * squared distance in integers so ties are exact; the
    # members arrive sorted by (row, col), so argmin picks the lowest.
    n = rows.size
    dr = n * rows - rows.sum()
    dc = n * cols - cols.sum()
    k = int(np.argmin(dr * dr + dc * dc))
    return int(rows[k]), int(cols[k])


def detect_frontiers(grid: OccupancyGrid, min_size: int = 3) -> list[Frontier]:
    """All 8-connected frontier components with at least ``min_size`` cells.

    The midpoint of a component is the member cell closest to its centroid.
    Results are sorted by midpoint ``(row, col)``.
    """
    mask = frontier_mask(grid.cells)
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return []
    rows, cols = np.nonzero(labels)  # row-major, so sorted by (row, col)
    lab = labels[rows, cols]
    order = np.argsort(lab, kind="stable")
    rows, cols, lab = rows[order].astype(np.int64), cols[order].astype(np.int64), lab[order]
    bounds = np.searchsorted(lab, np.arange(1, n + 2))

    out = []
    for k in range(n):
        lo, hi = bounds[k], bounds[k + 1]
        if hi - lo < min_size:
            continue
        r, c = rows[lo:hi], cols[lo:hi]
        cells = tuple(zip(r.tolist(), c.tolist()))
        out.append(Frontier(cells, _midpoint(r, c)))
    out.sort(key=lambda f: f.midpoint)
    return out
