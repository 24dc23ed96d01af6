"""Grid traversal along rays (Amanatides & Woo style DDA).

Coordinates are continuous cell units: the point ``(x, y)`` lies in cell
column ``floor(x)`` and row ``floor(y)``. A ray leaving ``(x0, y0)`` at angle
``a`` visits cells in order; for each visited cell we report the ray
parameter ``t`` at which the ray enters it (0 for the starting cell).

Two implementations live here. :func:`traverse` is a plain scalar loop and
serves as the reference; :func:`march` advances many rays in lockstep with
numpy and is what the hot paths use. Both apply the same tie rule (when the
next x and y boundaries coincide, the y step is taken) so they visit
identical cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Slack on ray parameters, in cells.
T_TOL = 1e-6


def traverse(x0: float, y0: float, angle: float, max_t: float,
             width: int | None = None, height: int | None = None) -> list[tuple[int, int, float]]:
    """Cells visited by one ray, as ``(col, row, t_enter)`` triples.

    Visits every cell whose entry parameter is ``<= max_t + T_TOL``. When a
    grid size is given, traversal stops at the grid edge.
    """
    dx, dy = math.cos(angle), math.sin(angle)
    ix, iy = math.floor(x0), math.floor(y0)
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    t_dx = 1.0 / abs(dx) if dx != 0 else math.inf
    t_dy = 1.0 / abs(dy) if dy != 0 else math.inf
    if dx > 0:
        tmax_x = (ix + 1 - x0) * t_dx
    elif dx < 0:
        tmax_x = (x0 - ix) * t_dx
    else:
        tmax_x = math.inf
    if dy > 0:
        tmax_y = (iy + 1 - y0) * t_dy
    elif dy < 0:
        tmax_y = (y0 - iy) * t_dy
    else:
        tmax_y = math.inf

    out = []
    t = 0.0
    while t <= max_t + T_TOL:
        if width is not None and not (0 <= ix < width and 0 <= iy < height):
            break
        out.append((ix, iy, t))
        if tmax_x < tmax_y:
            t = tmax_x
            ix += step_x
            tmax_x += t_dx
        else:
            t = tmax_y
            iy += step_y
            tmax_y += t_dy
    return out


@dataclass
class MarchResult:
    """Flattened visit list for a bundle of rays.

    Entries are ordered by march iteration, so within one ray they are in
    increasing ``t``. ``complete[k]`` is True when ray ``k`` ran to its
    ``max_t`` (as opposed to leaving the grid or hitting a stop cell).
    """

    ray: np.ndarray
    col: np.ndarray
    row: np.ndarray
    t: np.ndarray
    complete: np.ndarray
    stopped: np.ndarray

    def last_index(self, n_rays: int) -> np.ndarray:
        """Index of each ray's final entry (-1 for rays with no entries)."""
        last = np.full(n_rays, -1, dtype=np.int64)
        # later entries overwrite earlier ones, which is exactly "last"
        last[self.ray] = np.arange(len(self.ray))
        return last


def march(x0: float, y0: float, angles: np.ndarray, max_t: np.ndarray | float,
          shape: tuple[int, int], stop: np.ndarray | None = None) -> MarchResult:
    """Advance all rays from ``(x0, y0)`` together.

    ``shape`` is ``(height, width)``. If ``stop`` (a boolean grid) is given,
    a ray ends after recording the first cell where ``stop`` is True.
    """
    angles = np.asarray(angles, dtype=float)
    n = angles.size
    max_t = np.broadcast_to(np.asarray(max_t, dtype=float), (n,)).copy()
    height, width = shape

    dx = np.cos(angles)
    dy = np.sin(angles)
    ix0, iy0 = math.floor(x0), math.floor(y0)
    ix = np.full(n, ix0, dtype=np.int64)
    iy = np.full(n, iy0, dtype=np.int64)
    step_x = np.where(dx > 0, 1, -1)
    step_y = np.where(dy > 0, 1, -1)
    with np.errstate(divide="ignore"):
        t_dx = np.where(dx != 0, 1.0 / np.abs(dx), np.inf)
        t_dy = np.where(dy != 0, 1.0 / np.abs(dy), np.inf)
    tmax_x = np.where(dx > 0, (ix0 + 1 - x0) * t_dx, np.where(dx < 0, (x0 - ix0) * t_dx, np.inf))
    tmax_y = np.where(dy > 0, (iy0 + 1 - y0) * t_dy, np.where(dy < 0, (y0 - iy0) * t_dy, np.inf))
    t = np.zeros(n)

    complete = np.zeros(n, dtype=bool)
    stopped = np.zeros(n, dtype=bool)
    inside = 0 <= ix0 < width and 0 <= iy0 < height
    active = np.nonzero(max_t + T_TOL >= 0)[0] if inside else np.zeros(0, dtype=np.int64)
    complete[max_t + T_TOL < 0] = True

    # State is kept only for live rays and compacted as rays finish.
    idx = active
    cx, cy = ix[idx], iy[idx]
    tx, ty, tt, mt = tmax_x[idx], tmax_y[idx], t[idx], max_t[idx]
    sx, sy, tdx, tdy = step_x[idx], step_y[idx], t_dx[idx], t_dy[idx]
    rays, cols, rows, ts = [], [], [], []
    while idx.size:
        rays.append(idx)
        cols.append(cx)
        rows.append(cy)
        ts.append(tt)
        if stop is not None:
            hit = stop[cy, cx]
            if hit.any():
                stopped[idx[hit]] = True
                keep = ~hit
                idx, cx, cy, tx, ty, mt = idx[keep], cx[keep], cy[keep], tx[keep], ty[keep], mt[keep]
                sx, sy, tdx, tdy = sx[keep], sy[keep], tdx[keep], tdy[keep]
                if not idx.size:
                    break

        take_x = tx < ty
        tt = np.where(take_x, tx, ty)
        cx = np.where(take_x, cx + sx, cx)
        cy = np.where(take_x, cy, cy + sy)
        tx = np.where(take_x, tx + tdx, tx)
        ty = np.where(take_x, ty, ty + tdy)

        done = tt > mt + T_TOL
        out = (cx < 0) | (cx >= width) | (cy < 0) | (cy >= height)
        if done.any():
            complete[idx[done]] = True
        drop = done | out
        if drop.any():
            keep = ~drop
            idx, cx, cy, tx, ty, tt, mt = idx[keep], cx[keep], cy[keep], tx[keep], ty[keep], tt[keep], mt[keep]
            sx, sy, tdx, tdy = sx[keep], sy[keep], tdx[keep], tdy[keep]

    if rays:
        return MarchResult(np.concatenate(rays), np.concatenate(cols), np.concatenate(rows),
                           np.concatenate(ts), complete, stopped)
    empty_i = np.zeros(0, dtype=np.int64)
    return MarchResult(empty_i, empty_i, empty_i, np.zeros(0), complete, stopped)


def segment_clear(blocked: np.ndarray, x0: float, y0: float, x1: float, y1: float) -> bool:
    """True if no cell crossed by the segment is blocked or off-grid."""
    height, width = blocked.shape
    length = math.hypot(x1 - x0, y1 - y0)
    angle = math.atan2(y1 - y0, x1 - x0)
    if not (0 <= x1 < width and 0 <= y1 < height):
        return False
    for cx, cy, _ in traverse(x0, y0, angle, length, width, height):
        if blocked[cy, cx]:
            return False
    return True


def wrap_angle(a):
    """Map an angle (or array of angles) into [-pi, pi)."""
    if isinstance(a, np.ndarray):
        return (a + np.pi) % (2 * np.pi) - np.pi
    return (a + math.pi) % (2 * math.pi) - math.pi
