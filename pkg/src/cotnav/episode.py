"""Episode runner: sense, step the explorer, move, repeat; plus JSONL traces."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .explorer import Explorer, ExplorerConfig, Phase
from .history import AgentAction
from .metrics import EpisodeResult, shortest_path_oracle
from .planner import PathError
from .simworld import World, apply_action, sense

TRACE_VERSION = 1


class JsonlTrace:
    """Append-only JSONL sink; usable as a callable record consumer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")

    def __call__(self, record: dict):
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def trace_schema() -> dict:
    """JSON Schema that every trace record satisfies."""
    return json.loads(resources.files("cotnav.data").joinpath("trace.schema.json").read_text("utf-8"))


def read_trace(path: str | Path) -> list[dict]:
    """Load a trace; raises ValueError on an empty or malformed file."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: not JSON ({exc.msg})") from exc
            if not isinstance(rec, dict) or "type" not in rec:
                raise ValueError(f"{path}:{n}: record without a type")
            records.append(rec)
    if not records:
        raise ValueError(f"{path}: empty trace")
    return records


def _encode_cells(cells: np.ndarray) -> list[str]:
    return ["".join(map(str, row)) for row in cells.tolist()]


def run_episode(world: World, config: ExplorerConfig, scorer, episode_id: int = 0,
                trace=None, scorer_info: dict | None = None) -> EpisodeResult:
    """Run one episode to completion and return its result.

    Success means the explorer stopped on its own with a target cell within
    ``success_radius`` of the final pose. ``trace``, if given, is called with
    every JSONL record (header, one per step, summary).
    """
    res = world.resolution
    degenerate = invalid = False
    try:
        shortest = shortest_path_oracle(world, world.start, world.targets, config.success_radius)
        degenerate = shortest == 0.0
    except PathError:
        shortest, invalid = math.nan, True

    if trace is not None:
        trace({"type": "header", "version": TRACE_VERSION, "episode_id": episode_id,
               "seed": world.seed, "category": world.category, "resolution": res,
               "world": world.to_text().split("\n"), "start": world.start.as_list(),
               "targets": [list(t) for t in world.targets], "config": config.to_dict(),
               "scorer": scorer_info or {"kind": type(scorer).__name__}})

    explorer = Explorer(config, scorer, world.shape, res, world.category)
    pose = world.start
    trajectory = [pose.as_list()]
    path_cells = 0.0
    while explorer.phase is not Phase.DONE:
        obs = sense(world, pose, config.cone, config.n_rays)
        action = explorer.step(obs)
        if trace is not None:
            trace({"type": "step", **explorer.record})
        if action is AgentAction.STOP:
            continue
        new_pose, moved = apply_action(world, pose, action, config.step_size, config.turn_angle)
        if moved and action in (AgentAction.FORWARD, AgentAction.BACKWARD):
            path_cells += math.hypot(new_pose.x - pose.x, new_pose.y - pose.y)
        pose = new_pose
        trajectory.append(pose.as_list())

    st = explorer.state
    near = min(math.hypot(c + 0.5 - pose.x, r + 0.5 - pose.y) for r, c in world.targets) * res
    success = st.outcome == "success" and near <= config.success_radius + 1e-9
    reason = None if success else (st.failure_reason or "stopped_outside_radius")
    result = EpisodeResult(success, path_cells * res, shortest, st.steps, trajectory, reason,
                           episode_id, world.seed, degenerate, invalid, st.scorer_calls,
                           st.fallback_events)
    if trace is not None:
        trace({"type": "summary", "result": result.to_dict(trajectory=True),
               "occupancy": _encode_cells(st.grid.cells),
               "values": np.round(st.value_map.values, 6).tolist(),
               "confidences": np.round(st.value_map.confidences, 6).tolist()})
    return result
