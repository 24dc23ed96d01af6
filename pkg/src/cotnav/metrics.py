"""Success rate, SPL, the ground-truth shortest path, and report tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .occupancy import GridPose
from .planner import PathError, distance_field


class MetricsError(ValueError):
    pass


@dataclass
class EpisodeResult:
    success: bool
    agent_path_length: float  # meters, translations only
    shortest_path_length: float  # meters
    steps: int
    trajectory: list = field(default_factory=list, repr=False)  # [x, y, heading] per pose
    failure_reason: str | None = None
    episode_id: int = 0
    seed: int | None = None
    degenerate: bool = False  # start already inside the success radius
    invalid: bool = False  # no ground-truth path to the target
    scorer_calls: int = 0
    fallback_events: int = 0

    def __post_init__(self):
        if self.agent_path_length < 0:
            raise ValueError("agent path length must be non-negative")

    @property
    def counted(self) -> bool:
        return not (self.degenerate or self.invalid)

    def to_dict(self, trajectory: bool = False) -> dict:
        d = {
            "episode_id": self.episode_id,
            "seed": self.seed,
            "success": self.success,
            "agent_path_length": round(self.agent_path_length, 9),
            "shortest_path_length": (round(self.shortest_path_length, 9)
                                     if math.isfinite(self.shortest_path_length) else None),
            "spl": round(_spl_term(self), 9) if self.counted else None,
            "steps": self.steps,
            "failure_reason": self.failure_reason,
            "degenerate": self.degenerate,
            "invalid": self.invalid,
            "scorer_calls": self.scorer_calls,
            "fallback_events": self.fallback_events,
        }
        if trajectory:
            d["trajectory"] = self.trajectory
        return d


def _spl_term(r: EpisodeResult) -> float:
    return (r.shortest_path_length / max(r.agent_path_length, r.shortest_path_length)) if r.success else 0.0


def spl(results: list[EpisodeResult]) -> float:
    """Mean of S_i * l_i / max(p_i, l_i)."""
    if not results:
        raise MetricsError("spl of an empty result list")
    for r in results:
        if not r.shortest_path_length > 0:
            raise MetricsError(f"episode {r.episode_id}: shortest path length must be positive")
    return math.fsum(_spl_term(r) for r in results) / len(results)


def sr(results: list[EpisodeResult]) -> float:
    if not results:
        raise MetricsError("sr of an empty result list")
    return sum(1 for r in results if r.success) / len(results)


def shortest_path_oracle(world, start: GridPose | None = None, targets=None,
                         success_radius: float = 1.0) -> float:
    """Ground-truth 8-connected geodesic, in meters, to the success region.

    The region is every Free cell whose center lies within ``success_radius``
    of a target cell center. Returns 0 when the start is already inside it;
    raises :class:`PathError` when the region is unreachable.
    """
    start = world.start if start is None else start
    targets = world.targets if targets is None else targets
    res = world.resolution
    radius = success_radius / res
    free = ~world.obstacles
    rows, cols = np.mgrid[0:world.height, 0:world.width]
    region = np.zeros(world.shape, dtype=bool)
    for tr, tc in targets:
        region |= np.hypot(rows - tr, cols - tc) <= radius + 1e-9
    region &= free
    if not region.any():
        raise PathError("success region is empty")
    sr_, sc_ = start.cell
    if region[sr_, sc_]:
        return 0.0
    df = distance_field(free, np.ones(world.shape), (sr_, sc_))
    best = float(df.dist[region].min())
    if not math.isfinite(best):
        raise PathError("target unreachable from start")
    return best * res


def aggregate(results: list[EpisodeResult]) -> dict:
    """Batch summary over episodes sorted by id; degenerate/invalid ones excluded."""
    results = sorted(results, key=lambda r: r.episode_id)
    counted = [r for r in results if r.counted]
    out = {
        "episodes": len(results),
        "counted": len(counted),
        "excluded": [r.episode_id for r in results if not r.counted],
        "sr": round(sr(counted), 9) if counted else None,
        "spl": round(spl(counted), 9) if counted else None,
        "successes": sum(r.success for r in counted),
        "mean_steps": round(float(np.mean([r.steps for r in counted])), 6) if counted else None,
        "scorer_calls": sum(r.scorer_calls for r in results),
        "fallback_events": sum(r.fallback_events for r in results),
    }
    calls = out["scorer_calls"]
    out["fallback_rate"] = round(out["fallback_events"] / calls, 9) if calls else 0.0
    return out


PERCENT_COLUMNS = {"sr", "spl", "fallback_rate"}


def format_table(rows: list[dict], columns: list[str]) -> str:
    """Aligned plain-text table; rate columns shown as percentages."""

    def cell(name, v):
        if isinstance(v, bool):
            return "yes" if v else "no"
        if isinstance(v, float):
            return f"{100 * v:.1f}" if name in PERCENT_COLUMNS else f"{v:.2f}"
        return "-" if v is None else str(v)

    body = [[cell(c, r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    for b in body:
        lines.append("  ".join(v.ljust(w) for v, w in zip(b, widths)).rstrip())
    return "\n".join(lines) + "\n"
