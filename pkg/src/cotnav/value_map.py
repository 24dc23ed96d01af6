"""Semantic value map with per-cell confidence.

Action scores from the scorer are spread over the visible part of the map,
weighted by a viewing-confidence cone (exponential distance decay times a
squared-cosine falloff toward the edge of the field of view), and folded
into the running map by a confidence-weighted average.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .frontier import Frontier
from .occupancy import CellState, GridPose, OccupancyGrid
from .raycast import march, wrap_angle

EPS = 1e-6
PRIOR_VALUE = 0.5

# Bearing of each action relative to the heading (positive = left).
ANCHORS = {"forward": 0.0, "left": math.pi / 2, "right": -math.pi / 2, "backward": math.pi}


@dataclass(frozen=True)
class ActionScores:
    forward: float
    backward: float
    left: float
    right: float

    def __post_init__(self):
        for name in ("forward", "backward", "left", "right"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} score {v} outside [0, 1]")

    @classmethod
    def uniform(cls, value: float = 0.25) -> ActionScores:
        return cls(value, value, value, value)

    def as_dict(self) -> dict[str, float]:
        return {"forward": self.forward, "backward": self.backward,
                "left": self.left, "right": self.right}

    def argmax(self) -> str:
        d = self.as_dict()
        return max(d, key=d.get)


@dataclass(frozen=True)
class ConeParams:
    lam: float = 0.05
    theta_fov: float = math.radians(79.0)
    max_range: float = 50.0

    def __post_init__(self):
        for name in ("lam", "theta_fov", "max_range"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not (0 < self.theta_fov <= math.pi):
            raise ValueError("theta_fov must lie in (0, pi]")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")


def viewing_confidence(d, theta, params: ConeParams):
    """Confidence of an observation at distance ``d`` (cells), bearing ``theta``.

    Works on scalars or arrays. Bearings at or beyond the half field of view
    get exactly zero.
    """
    half = params.theta_fov / 2
    d = np.asarray(d, dtype=float)
    theta = np.asarray(theta, dtype=float)
    inside = np.abs(theta) < half
    c = np.exp(-params.lam * d) * np.cos(theta / half * (math.pi / 2)) ** 2
    c = np.where(inside, c, 0.0)
    return float(c) if c.ndim == 0 else c


def interpolate_scores(scores: ActionScores, bearing):
    """Score at a bearing offset, linear between neighbouring action anchors.

    Forward sits at 0, left at +90 deg, right at -90 deg and backward at
    +-180 deg.
    """
    b = np.asarray(wrap_angle(np.asarray(bearing, dtype=float)))
    q = math.pi / 2
    a = np.abs(b)
    w = np.where(a <= q, a / q, (a - q) / q)
    side = np.where(b >= 0, scores.left, scores.right)
    lo = np.where(a <= q, scores.forward, side)
    hi = np.where(a <= q, side, scores.backward)
    v = (1 - w) * lo + w * hi
    return float(v) if v.ndim == 0 else v


@dataclass
class ProjectedField:
    """Sparse per-cell observation: cells plus their value and confidence."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    confidences: np.ndarray

    def __len__(self):
        return self.rows.size

    def cells(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))


def visible_cells(pose: GridPose, grid: OccupancyGrid, params: ConeParams):
    """Cells in range and field of view with an unobstructed line of sight.

    Returns ``(rows, cols, dist, bearing)``. Obstacle cells are excluded; a
    cell is visible when the segment from the pose to its center crosses no
    Obstacle cell before reaching it.
    """
    r = params.max_range
    half = params.theta_fov / 2
    r0 = max(0, math.floor(pose.y - r))
    r1 = min(grid.height, math.floor(pose.y + r) + 1)
    c0 = max(0, math.floor(pose.x - r))
    c1 = min(grid.width, math.floor(pose.x + r) + 1)
    rows, cols = np.mgrid[r0:r1, c0:c1]
    rows, cols = rows.ravel(), cols.ravel()
    dx = cols + 0.5 - pose.x
    dy = rows + 0.5 - pose.y
    dist = np.hypot(dx, dy)
    bearing = wrap_angle(np.arctan2(dy, dx) - pose.heading)
    keep = (dist <= r) & (np.abs(bearing) <= half) & (grid.cells[rows, cols] != CellState.OBSTACLE)
    rows, cols, dist, bearing = rows[keep], cols[keep], dist[keep], bearing[keep]
    if rows.size == 0:
        return rows, cols, dist, bearing

    # Line of sight: march toward every candidate center, stopping at the
    # first Obstacle. Candidates never are Obstacles, so a ray that stopped
    # was blocked before its target.
    angles = np.arctan2(rows + 0.5 - pose.y, cols + 0.5 - pose.x)
    res = march(pose.x, pose.y, angles, dist, grid.shape, stop=grid.obstacle)
    clear = ~res.stopped
    return rows[clear], cols[clear], dist[clear], bearing[clear]


def project_scores(pose: GridPose, scores: ActionScores, grid: OccupancyGrid,
                   params: ConeParams) -> ProjectedField:
    rows, cols, dist, bearing = visible_cells(pose, grid, params)
    values = interpolate_scores(scores, bearing) if rows.size else np.zeros(0)
    conf = viewing_confidence(dist, bearing, params) if rows.size else np.zeros(0)
    return ProjectedField(rows, cols, np.atleast_1d(values), np.atleast_1d(conf))


def fuse_values(v_curr, c_curr, v_prev, c_prev, eps: float = EPS):
    """Confidence-weighted merge of a new observation into a prior.

    Returns ``(v_new, c_new)``. Where ``c_curr`` is zero the prior is
    returned unchanged.
    """
    v_curr, c_curr = np.asarray(v_curr, float), np.asarray(c_curr, float)
    v_prev, c_prev = np.asarray(v_prev, float), np.asarray(c_prev, float)
    denom = c_curr + c_prev + eps
    v_new = (c_curr * v_curr + c_prev * v_prev) / denom
    c_new = (c_curr * c_curr + c_prev * c_prev) / denom
    seen = c_curr > 0
    v_new = np.where(seen, v_new, v_prev)
    c_new = np.where(seen, c_new, c_prev)
    if v_new.ndim == 0:
        return float(v_new), float(c_new)
    return v_new, c_new


@dataclass
class ValueMap:
    height: int
    width: int
    values: np.ndarray = field(default=None, repr=False)
    confidences: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.values is None:
            self.values = np.full((self.height, self.width), PRIOR_VALUE)
        if self.confidences is None:
            self.confidences = np.zeros((self.height, self.width))

    @classmethod
    def like(cls, grid: OccupancyGrid) -> ValueMap:
        return cls(grid.height, grid.width)

    def fuse(self, f: ProjectedField) -> ValueMap:
        if len(f) == 0:
            return self
        if (f.rows.min() < 0 or f.cols.min() < 0 or f.rows.max() >= self.height
                or f.cols.max() >= self.width):
            raise IndexError("projected field extends outside the value map")
        v, c = fuse_values(f.values, f.confidences,
                           self.values[f.rows, f.cols], self.confidences[f.rows, f.cols])
        self.values[f.rows, f.cols] = v
        self.confidences[f.rows, f.cols] = c
        return self

    def query(self, frontier: Frontier, radius: float = 5.0) -> float:
        return query_point(self, frontier.midpoint, radius)

    def to_json(self) -> str:
        return json.dumps({"values": self.values.round(6).tolist(),
                           "confidences": self.confidences.round(6).tolist()})

    def value_image(self) -> np.ndarray:
        return np.rint(255 * np.clip(self.values, 0, 1)).astype(np.uint8)

    def confidence_image(self) -> np.ndarray:
        return np.rint(255 * np.clip(self.confidences, 0, 1)).astype(np.uint8)


def fuse(vmap: ValueMap, f: ProjectedField) -> ValueMap:
    return vmap.fuse(f)


def query_point(vmap: ValueMap, cell: tuple[int, int], radius: float = 5.0) -> float:
    """Confidence-weighted mean value in a disk around ``cell`` (row, col)."""
    r, c = cell
    k = int(math.floor(radius))
    r0, r1 = max(0, r - k), min(vmap.height, r + k + 1)
    c0, c1 = max(0, c - k), min(vmap.width, c + k + 1)
    rr, cc = np.ogrid[r0:r1, c0:c1]
    disk = (rr - r) ** 2 + (cc - c) ** 2 <= radius * radius
    conf = vmap.confidences[r0:r1, c0:c1][disk]
    total = conf.sum()
    if total < EPS:
        return PRIOR_VALUE
    return float((conf * vmap.values[r0:r1, c0:c1][disk]).sum() / total)


def query(vmap: ValueMap, frontier: Frontier, radius: float = 5.0) -> float:
    return query_point(vmap, frontier.midpoint, radius)
