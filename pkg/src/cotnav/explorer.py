"""The exploration loop: map, frontiers, scoring, value fusion, waypoint, action.

One :class:`Explorer` drives one episode. Each call to :meth:`Explorer.step`
consumes an observation and returns the next primitive action. The explorer
replans every step and emits a single primitive toward the next stretch of
the planned path.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .frontier import Frontier, detect_frontiers
from .history import ActionHistory, AgentAction, detect_stagnation, fallback_action
from .occupancy import CellState, GridPose, OccupancyGrid, integrate_depth
from .planner import PathError, cost_grid, distance_field
from .prompts import CoTLevel, PromptRequest, generate_prompt
from .raycast import segment_clear, wrap_angle
from .render import blank_image, topdown_render
from .scorer import ScorerError, ScorerRequest, ScorerResponse, uniform_response
from .value_map import ActionScores, ConeParams, ValueMap, project_scores

log = logging.getLogger(__name__)


class Phase(str, Enum):
    EXPLORING = "exploring"
    GOAL_NAVIGATION = "goal_navigation"
    DONE = "done"


class NoFrontier(LookupError):
    """No frontier is left to choose from."""


@dataclass
class StagnationParams:
    window: int = 8
    disp_threshold: float = 2.0  # cells
    oscillation_window: int = 6
    persistence: int = 3  # steps the fallback action is held


@dataclass
class ExplorerConfig:
    cot_level: CoTLevel = CoTLevel.FULL
    use_history: bool = True
    use_topdown_map: bool = True
    max_steps: int = 500
    cone: ConeParams = field(default_factory=ConeParams)
    stagnation: StagnationParams = field(default_factory=StagnationParams)
    success_radius: float = 1.0  # meters
    step_size: float = 0.25  # meters
    turn_angle_deg: float = 30.0
    align_tolerance_deg: float = 15.0
    history_capacity: int = 10
    frontier_min_size: int = 3
    query_radius: float = 5.0  # cells
    query_every: int = 1
    unknown_penalty: float = 2.0
    clearance_penalty: float = 2.0
    lookahead: int = 4  # path cells
    goal_patience: int = 6  # steps without detection before leaving goal navigation
    confirm_with_scorer: bool = True
    n_rays: int = 90

    def __post_init__(self):
        self.cot_level = CoTLevel(self.cot_level)
        if isinstance(self.cone, dict):
            self.cone = ConeParams(**self.cone)
        if isinstance(self.stagnation, dict):
            self.stagnation = StagnationParams(**self.stagnation)
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.success_radius <= 0:
            raise ValueError("success_radius must be positive")
        if self.query_every < 1:
            raise ValueError("query_every must be at least 1")
        if self.stagnation.window > self.history_capacity:
            raise ValueError("stagnation window exceeds history capacity")

    @property
    def turn_angle(self) -> float:
        return math.radians(self.turn_angle_deg)

    @property
    def align_tolerance(self) -> float:
        return math.radians(self.align_tolerance_deg)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cot_level"] = self.cot_level.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExplorerConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown explorer config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ExplorerState:
    phase: Phase
    grid: OccupancyGrid
    value_map: ValueMap
    history: ActionHistory
    waypoint: tuple[int, int] | None = None
    fallback_remaining: int = 0
    cooldown: int = 0
    steps: int = 0
    outcome: str | None = None  # "success" or "failure" once Done
    failure_reason: str | None = None
    target_cell: tuple[int, int] | None = None
    lost_steps: int = 0
    scan_remaining: int = 0
    scanned: bool = False
    last_response: ScorerResponse | None = None
    scorer_calls: int = 0
    fallback_events: int = 0


def select_waypoint(candidates: list[tuple[Frontier, float]], pose: GridPose) -> Frontier:
    """Highest value first; ties go to the nearest, then the lowest (row, col)."""
    if not candidates:
        raise NoFrontier("no frontier candidates")

    def key(item):
        f, v = item
        r, c = f.midpoint
        return (-v, math.hypot(c + 0.5 - pose.x, r + 0.5 - pose.y), (r, c))

    return min(candidates, key=key)[0]


def forward_clear(blocked: np.ndarray, pose: GridPose, distance: float) -> bool:
    """A translation of ``distance`` cells along the heading crosses no blocked cell."""
    x1 = pose.x + distance * math.cos(pose.heading)
    y1 = pose.y + distance * math.sin(pose.heading)
    return segment_clear(blocked, pose.x, pose.y, x1, y1)


def steer(pose: GridPose, target: tuple[float, float], blocked: np.ndarray, step_cells: float,
          tolerance: float, turn_angle: float = math.radians(30)) -> AgentAction:
    """Next primitive toward ``target`` (x, y).

    Among the headings reachable by whole turns, pick the one closest to the
    target bearing whose forward step is clear; step forward if that is the
    current heading, otherwise turn toward it. When the aligned heading is
    clear this is the plain rule: turn until within ``tolerance``, then
    Forward.
    """
    bearing = wrap_angle(math.atan2(target[1] - pose.y, target[0] - pose.x) - pose.heading)
    if abs(bearing) <= tolerance + 1e-9 and forward_clear(blocked, pose, step_cells):
        return AgentAction.FORWARD
    n = max(1, int(round(2 * math.pi / turn_angle)))
    best = None
    for k in range(-(n // 2) + 1, n // 2 + 1):
        dev = abs(wrap_angle(bearing - k * turn_angle))
        if dev > math.pi / 2:
            continue
        cand = GridPose(pose.x, pose.y, pose.heading + k * turn_angle)
        if forward_clear(blocked, cand, step_cells):
            key = (dev, abs(k), -k)
            if best is None or key < best[0]:
                best = (key, k)
    if best is None:
        return AgentAction.TURN_LEFT if bearing >= 0 else AgentAction.TURN_RIGHT
    k = best[1]
    if k == 0:
        return AgentAction.FORWARD
    return AgentAction.TURN_LEFT if k > 0 else AgentAction.TURN_RIGHT


class Explorer:
    def __init__(self, config: ExplorerConfig, scorer, shape: tuple[int, int], resolution: float,
                 target_category: str):
        self.config = config
        self.scorer = scorer
        self.resolution = resolution
        self.target_category = target_category
        grid = OccupancyGrid(shape[1], shape[0], resolution)
        self.state = ExplorerState(Phase.EXPLORING, grid, ValueMap.like(grid),
                                   ActionHistory(config.history_capacity))
        self._pending: AgentAction | None = None
        self.record: dict = {}

    @property
    def phase(self) -> Phase:
        return self.state.phase

    @property
    def step_cells(self) -> float:
        return self.config.step_size / self.resolution

    def _finish(self, outcome: str, reason: str | None = None) -> AgentAction:
        self.state.phase = Phase.DONE
        self.state.outcome = outcome
        self.state.failure_reason = reason
        self.state.waypoint = None
        return AgentAction.STOP

    # -- scoring -----------------------------------------------------------

    def _query(self, pose: GridPose) -> tuple[ScorerResponse, float, bool]:
        cfg, st = self.config, self.state
        history = st.history.render_for_prompt() if cfg.use_history else ""
        prompt = generate_prompt(PromptRequest(cfg.cot_level, self.target_category, history))
        topdown = topdown_render(st.grid, pose) if cfg.use_topdown_map else blank_image()
        request = ScorerRequest(self._ego, topdown, prompt, self.target_category, pose, st.grid)
        st.scorer_calls += 1
        t0 = time.perf_counter()
        try:
            resp = self.scorer.score(request)
            fell_back = False
        except ScorerError as exc:
            log.warning("scorer failed (%s); using uniform scores", exc)
            resp = uniform_response(f"fallback: {exc}")
            st.fallback_events += 1
            fell_back = True
        return resp, time.perf_counter() - t0, fell_back

    # -- motion ------------------------------------------------------------

    def _follow(self, pose: GridPose, path: list[tuple[int, int]]) -> AgentAction:
        blocked = self.state.grid.obstacle
        if len(path) < 2:
            return AgentAction.TURN_LEFT
        target = None
        for k in range(min(self.config.lookahead, len(path) - 1), 0, -1):
            r, c = path[k]
            if segment_clear(blocked, pose.x, pose.y, c + 0.5, r + 0.5):
                target = (c + 0.5, r + 0.5)
                break
        if target is None:
            r, c = path[1]
            target = (c + 0.5, r + 0.5)
        return steer(pose, target, blocked, self.step_cells, self.config.align_tolerance,
                     self.config.turn_angle)

    def _safe(self, action: AgentAction, pose: GridPose) -> AgentAction:
        blocked = self.state.grid.obstacle
        if action is AgentAction.FORWARD and not forward_clear(blocked, pose, self.step_cells):
            return AgentAction.TURN_LEFT
        if action is AgentAction.BACKWARD and not forward_clear(blocked, pose, -self.step_cells):
            return AgentAction.TURN_LEFT
        return action

    def _distances(self, pose: GridPose):
        cfg = self.config
        passable, cost = cost_grid(self.state.grid, cfg.unknown_penalty, cfg.clearance_penalty)
        return distance_field(passable, cost, pose.cell)

    # -- goal navigation ---------------------------------------------------

    def goal_navigate(self, obs) -> AgentAction | None:
        """One approach step; ``None`` means detection was lost (back to exploring)."""
        st, cfg = self.state, self.config
        pose = obs.pose
        if obs.target_detected:
            st.target_cell = obs.target_cell
            st.lost_steps = 0
        else:
            st.lost_steps += 1
            if st.lost_steps > cfg.goal_patience:
                st.phase = Phase.EXPLORING
                st.target_cell = None
                st.lost_steps = 0
                return None
        tr, tc = st.target_cell
        radius = cfg.success_radius / self.resolution
        if math.hypot(tc + 0.5 - pose.x, tr + 0.5 - pose.y) <= radius:
            return self._finish("success")
        df = self._distances(pose)
        grid = st.grid
        inner = max(radius - 1.0, 1.0)
        k = int(math.ceil(inner))
        r0, r1 = max(0, tr - k), min(grid.height, tr + k + 1)
        c0, c1 = max(0, tc - k), min(grid.width, tc + k + 1)
        rr, cc = np.mgrid[r0:r1, c0:c1]
        near = np.hypot(rr - tr, cc - tc) <= inner
        d = np.where(near, df.dist[r0:r1, c0:c1], np.inf)
        if not np.isfinite(d).any():
            return self._finish("failure", "target_unreachable")
        i = np.unravel_index(np.argmin(d), d.shape)  # row-major argmin: lowest (row, col) on ties
        goal = (int(rr[i]), int(cc[i]))
        st.waypoint = goal
        return self._follow(pose, df.path_to(goal))

    # -- main step ---------------------------------------------------------

    def step(self, obs) -> AgentAction:
        """Consume one observation and return the next primitive action."""
        st, cfg = self.state, self.config
        if st.phase is Phase.DONE:
            raise RuntimeError("episode already finished")
        pose = obs.pose
        self._ego = obs.egocentric
        if self._pending is not None:
            st.history.push(self._pending, pose)
        if st.history.origin is None and len(st.history) == 0:
            st.history.origin = pose
        rec = {"step": st.steps, "pose": pose.as_list(), "stagnation": False,
               "fallback": False, "latency_s": None, "scores": None, "waypoint": None}
        self.record = rec
        if st.steps >= cfg.max_steps:
            action = self._finish("failure", "budget")
            rec.update(action=action.value, phase=st.phase.value, frontiers=0)
            return action

        integrate_depth(st.grid, pose, obs.scan)
        r, c = pose.cell
        st.grid.mark_free([r], [c])
        frontiers = detect_frontiers(st.grid, cfg.frontier_min_size)
        rec["frontiers"] = len(frontiers)

        resp = st.last_response
        if resp is None or st.steps % cfg.query_every == 0:
            resp, latency, fell_back = self._query(pose)
            st.last_response = resp
            st.value_map.fuse(project_scores(pose, resp.scores, st.grid, cfg.cone))
            rec.update(latency_s=latency, fallback=fell_back, scores=resp.scores.as_dict(),
                       target_found=resp.target_found)
            if resp.exchange is not None:
                rec["exchange"] = resp.exchange

        action = None
        if st.phase is Phase.EXPLORING and obs.target_detected and (
                resp.target_found or not cfg.confirm_with_scorer):
            st.phase = Phase.GOAL_NAVIGATION
            st.target_cell = obs.target_cell
            st.lost_steps = 0
            st.fallback_remaining = 0
            st.scan_remaining = 0
        if st.phase is Phase.GOAL_NAVIGATION:
            action = self.goal_navigate(obs)
        if action is None:
            action = self._explore(pose, frontiers, rec)
        st.steps += 1
        self._pending = action if action is not AgentAction.STOP else None
        rec.update(action=action.value, phase=st.phase.value,
                   waypoint=list(st.waypoint) if st.waypoint else None)
        return action

    def _explore(self, pose: GridPose, frontiers: list[Frontier], rec: dict) -> AgentAction:
        st, cfg = self.state, self.config
        sp = cfg.stagnation
        if st.cooldown > 0:
            st.cooldown -= 1
        if cfg.use_history and st.fallback_remaining == 0 and st.cooldown == 0 \
                and st.scan_remaining == 0 \
                and detect_stagnation(st.history, sp.window, sp.disp_threshold, sp.oscillation_window):
            st.fallback_remaining = sp.persistence
        if st.fallback_remaining > 0:
            st.fallback_remaining -= 1
            if st.fallback_remaining == 0:
                st.cooldown = sp.window
            rec["stagnation"] = True
            return self._safe(fallback_action(st.history), pose)

        df = self._distances(pose) if frontiers else None
        candidates = []
        for f in frontiers:
            if df.reachable(f.midpoint):
                candidates.append((f, st.value_map.query(f, cfg.query_radius)))
        try:
            chosen = select_waypoint(candidates, pose)
        except NoFrontier:
            return self._no_frontier()
        st.scan_remaining = 0
        st.waypoint = chosen.midpoint
        return self._follow(pose, df.path_to(chosen.midpoint))

    def _no_frontier(self) -> AgentAction:
        st = self.state
        st.waypoint = None
        if st.scan_remaining == 0 and not st.scanned:
            st.scanned = True
            st.scan_remaining = int(math.ceil(2 * math.pi / self.config.turn_angle - 1e-9))
        if st.scan_remaining > 0:
            st.scan_remaining -= 1
            return AgentAction.TURN_LEFT
        return self._finish("failure", "no_frontier")
