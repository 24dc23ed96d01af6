"""Deterministic 2-D grid world: layouts, depth sensing, motion, detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .history import AgentAction
from .occupancy import DepthScan, GridPose
from .raycast import march, segment_clear, traverse, wrap_angle
from .render import egocentric_render
from .value_map import ConeParams

CATEGORIES = ("tv", "couch", "bed", "chair", "toilet", "plant")
DEFAULT_RAYS = 90


class FormatError(ValueError):
    """Malformed ASCII world."""


@dataclass(frozen=True, eq=False)
class World:
    obstacles: np.ndarray  # bool (height, width), True = wall
    targets: tuple[tuple[int, int], ...]  # (row, col)
    start: GridPose
    seed: int | None = None
    resolution: float = 0.1
    category: str = "tv"

    def __post_init__(self):
        obs = np.asarray(self.obstacles, dtype=bool)
        obs.flags.writeable = False
        object.__setattr__(self, "obstacles", obs)
        h, w = obs.shape
        if not self.targets:
            raise ValueError("world needs at least one target cell")
        r, c = self.start.cell
        if not (0 <= r < h and 0 <= c < w) or obs[r, c]:
            raise ValueError("start pose must be on a free cell")
        if not (obs[0].all() and obs[-1].all() and obs[:, 0].all() and obs[:, -1].all()):
            raise ValueError("world border must be all obstacle")
        for tr, tc in self.targets:
            if obs[tr, tc]:
                raise ValueError(f"target {(tr, tc)} is inside a wall")

    @property
    def shape(self) -> tuple[int, int]:
        return self.obstacles.shape

    @property
    def height(self) -> int:
        return self.obstacles.shape[0]

    @property
    def width(self) -> int:
        return self.obstacles.shape[1]

    def is_free(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width and not self.obstacles[row, col]

    def to_text(self) -> str:
        chars = np.where(self.obstacles, "#", ".").astype("<U1")
        for r, c in self.targets:
            chars[r, c] = "T"
        sr, sc = self.start.cell
        chars[sr, sc] = "S"
        return "\n".join("".join(row) for row in chars)

    def fingerprint(self) -> bytes:
        """Byte string that identifies the world exactly."""
        return (self.to_text() + f"|{self.start.as_list()!r}|{self.seed}|{self.category}").encode()


def load_world(text: str, resolution: float = 0.1, category: str = "tv") -> World:
    """Parse an ASCII layout: ``#`` wall, ``.`` floor, ``S`` start, ``T`` target."""
    lines = [ln.rstrip("\r") for ln in text.strip("\n").split("\n")]
    if not lines or not lines[0]:
        raise FormatError("empty world")
    width = len(lines[0])
    if any(len(ln) != width for ln in lines):
        raise FormatError("world is not rectangular")
    bad = set("".join(lines)) - set("#.ST")
    if bad:
        raise FormatError(f"unexpected characters {sorted(bad)}")
    grid = np.array([list(ln) for ln in lines])
    starts = np.argwhere(grid == "S")
    targets = [tuple(map(int, t)) for t in np.argwhere(grid == "T")]
    if len(starts) != 1:
        raise FormatError(f"expected exactly one S, found {len(starts)}")
    if not targets:
        raise FormatError("no target cell T")
    obstacles = grid == "#"
    if not (obstacles[0].all() and obstacles[-1].all() and obstacles[:, 0].all() and obstacles[:, -1].all()):
        raise FormatError("world border must be all '#'")
    for r, c in targets:
        if not any(not obstacles[r + dr, c + dc] for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))):
            raise FormatError(f"target at {(r, c)} has no free neighbour")
    sr, sc = map(int, starts[0])
    return World(obstacles, tuple(targets), GridPose(sc + 0.5, sr + 0.5, 0.0), None, resolution, category)


def _split(rect, rng, min_room):
    r0, c0, r1, c1 = rect
    h, w = r1 - r0, c1 - c0
    horizontal = h > w if h != w else bool(rng.integers(2))
    span = h if horizontal else w
    lo, hi = min_room, span - min_room - 1
    if hi < lo:
        return None
    s = int(rng.integers(lo, hi + 1))
    if horizontal:
        return (r0, c0, r0 + s, c1), (r0 + s + 1, c0, r1, c1), ("h", r0 + s, c0, c1)
    return (r0, c0, r1, c0 + s), (r0, c0 + s + 1, r1, c1), ("v", c0 + s, r0, r1)


def _try_generate(rng, rooms, size, min_room, door_width, min_separation):
    obstacles = np.ones((size, size), dtype=bool)
    leaves = [(1, 1, size - 1, size - 1)]
    walls = []
    while len(leaves) < rooms:
        leaves.sort(key=lambda r: (r[2] - r[0]) * (r[3] - r[1]), reverse=True)
        for i, leaf in enumerate(leaves):
            parts = _split(leaf, rng, min_room)
            if parts is not None:
                a, b, wall = parts
                leaves[i:i + 1] = [a, b]
                walls.append(wall)
                break
        else:
            return None
    for r0, c0, r1, c1 in leaves:
        obstacles[r0:r1, c0:c1] = False

    # One door per split line keeps every leaf connected.
    for kind, pos, a0, a1 in walls:
        options = []
        for s in range(a0 + 1, a1 - door_width):
            span = range(s, s + door_width)
            if kind == "h":
                ok = all(not obstacles[pos - 1, k] and not obstacles[pos + 1, k] for k in span)
            else:
                ok = all(not obstacles[k, pos - 1] and not obstacles[k, pos + 1] for k in span)
            if ok:
                options.append(s)
        if not options:
            return None
        s = options[int(rng.integers(len(options)))]
        if kind == "h":
            obstacles[pos, s:s + door_width] = False
        else:
            obstacles[s:s + door_width, pos] = False

    room_of = np.full((size, size), -1)
    for k, (r0, c0, r1, c1) in enumerate(leaves):
        room_of[r0:r1, c0:c1] = k

    # Furniture: a few small blocks away from the walls.
    for r0, c0, r1, c1 in leaves:
        for _ in range(int(rng.integers(0, 3))):
            bh, bw = int(rng.integers(2, 5)), int(rng.integers(2, 5))
            if r1 - r0 < bh + 8 or c1 - c0 < bw + 8:
                continue
            br = int(rng.integers(r0 + 4, r1 - bh - 3))
            bc = int(rng.integers(c0 + 4, c1 - bw - 3))
            obstacles[br:br + bh, bc:bc + bw] = True

    def interior_cells(k, margin):
        r0, c0, r1, c1 = leaves[k]
        cells = [(r, c) for r in range(r0 + margin, r1 - margin) for c in range(c0 + margin, c1 - margin)
                 if not obstacles[r, c]]
        return cells

    start_room = int(rng.integers(len(leaves)))
    starts = interior_cells(start_room, 2)
    if not starts:
        return None
    sr, sc = starts[int(rng.integers(len(starts)))]
    target_rooms = [k for k in range(len(leaves)) if k != start_room] or [start_room]
    target_room = target_rooms[int(rng.integers(len(target_rooms)))]
    cands = [(r, c) for r, c in interior_cells(target_room, 1)
             if math.hypot(r - sr, c - sc) >= min_separation]
    if not cands:
        return None
    tr, tc = cands[int(rng.integers(len(cands)))]

    labels, n = ndimage.label(~obstacles)
    if n != 1:
        return None
    heading = float(rng.uniform(-math.pi, math.pi))
    return obstacles, (sr, sc), (tr, tc), heading


def generate_world(seed: int, rooms: int = 4, size: int = 64, resolution: float = 0.1,
                   min_room: int = 10, door_width: int = 6, min_separation: float = 16.0,
                   max_tries: int = 200) -> World:
    """Room-and-door layout from recursive binary space partitioning.

    Every free cell is connected; with two or more rooms the target sits in
    a room other than the start room. The same arguments give the same world.
    """
    if rooms < 1 or size < 8:
        raise ValueError("rooms and size must be positive (size >= 8)")
    rng = np.random.default_rng(seed)
    category = CATEGORIES[seed % len(CATEGORIES)]
    for _ in range(max_tries):
        out = _try_generate(rng, rooms, size, min_room, door_width, min_separation)
        if out is not None:
            obstacles, (sr, sc), target, heading = out
            return World(obstacles, (target,), GridPose(sc + 0.5, sr + 0.5, heading), seed,
                         resolution, category)
    raise RuntimeError(f"could not generate a connected world for seed {seed}")


@dataclass
class Observation:
    pose: GridPose
    scan: DepthScan
    egocentric: np.ndarray = field(repr=False)
    target_detected: bool = False
    target_cell: tuple[int, int] | None = None


def target_visible(obstacles: np.ndarray, pose: GridPose, cell: tuple[int, int],
                   cone: ConeParams) -> bool:
    """Target cell within range and field of view, with clear line of sight."""
    r, c = cell
    dx, dy = c + 0.5 - pose.x, r + 0.5 - pose.y
    dist = math.hypot(dx, dy)
    if dist > cone.max_range:
        return False
    if dist > 0 and abs(wrap_angle(math.atan2(dy, dx) - pose.heading)) > cone.theta_fov / 2:
        return False
    h, w = obstacles.shape
    for cx, cy, _ in traverse(pose.x, pose.y, math.atan2(dy, dx), dist, w, h):
        if (cy, cx) == (r, c):
            break
        if obstacles[cy, cx]:
            return False
    return True


def detect_target(world: World, pose: GridPose, cone: ConeParams) -> tuple[int, int] | None:
    """Nearest visible target cell (the noiseless oracle detector)."""
    best, best_d = None, math.inf
    for cell in world.targets:
        if target_visible(world.obstacles, pose, cell, cone):
            d = math.hypot(cell[1] + 0.5 - pose.x, cell[0] + 0.5 - pose.y)
            if d < best_d:
                best, best_d = cell, d
    return best


def sense(world: World, pose: GridPose, cone: ConeParams, n_rays: int = DEFAULT_RAYS) -> Observation:
    """Ray-cast depth over the field of view plus oracle detection."""
    r, c = pose.cell
    if not world.is_free(r, c):
        raise ValueError("sensing pose must be on a free cell")
    half = cone.theta_fov / 2
    angles = np.linspace(-half, half, n_rays) if n_rays > 1 else np.zeros(n_rays)
    res = march(pose.x, pose.y, pose.heading + angles, cone.max_range, world.shape, stop=world.obstacles)
    ranges = np.full(n_rays, cone.max_range, dtype=float)
    hits = np.zeros(n_rays, dtype=bool)
    if res.ray.size:
        last = res.last_index(n_rays)
        stopped = np.nonzero(res.stopped)[0]
        hits[stopped] = True
        ranges[stopped] = np.maximum(res.t[last[stopped]], 1e-6)
    ranges = np.minimum(ranges, cone.max_range)
    res_m = world.resolution
    scan = DepthScan(angles, ranges * res_m, hits, cone.max_range * res_m)

    cell = detect_target(world, pose, cone)
    bearing = None
    if cell is not None:
        bearing = wrap_angle(math.atan2(cell[0] + 0.5 - pose.y, cell[1] + 0.5 - pose.x) - pose.heading)
    ego = egocentric_render(angles, ranges, cone.max_range, cone.theta_fov, bearing)
    return Observation(pose, scan, ego, cell is not None, cell)


def apply_action(world: World, pose: GridPose, action: AgentAction, step_size: float = 0.25,
                 turn_angle: float = math.radians(30)) -> tuple[GridPose, bool]:
    """Move the agent; translations that would cross a wall are vetoed.

    ``step_size`` is in meters. Returns the new pose and whether it changed.
    """
    if action in (AgentAction.FORWARD, AgentAction.BACKWARD):
        d = step_size / world.resolution * (1 if action is AgentAction.FORWARD else -1)
        nx = pose.x + d * math.cos(pose.heading)
        ny = pose.y + d * math.sin(pose.heading)
        if not segment_clear(world.obstacles, pose.x, pose.y, nx, ny):
            return pose, False
        return GridPose(nx, ny, pose.heading), True
    if action is AgentAction.TURN_LEFT:
        return GridPose(pose.x, pose.y, pose.heading + turn_angle), True
    if action is AgentAction.TURN_RIGHT:
        return GridPose(pose.x, pose.y, pose.heading - turn_angle), True
    return pose, False
