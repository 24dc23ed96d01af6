"""Scripted scenarios: a corridor T-junction and a scorer that makes agents dither.

The corridor world is a straight corridor running east into a north-south
cross corridor; the target sits at the end of one arm. The oscillation
scorer rates whatever is straight ahead at zero and both sides at one, so
the arm the agent is facing always looks worse than the arm at the edge of
its view. Without a loop breaker the agent turns back and forth at the
junction forever.
"""

from __future__ import annotations

import numpy as np

from .occupancy import GridPose
from .scorer import ScorerResponse
from .simworld import World, detect_target
from .value_map import ActionScores, ConeParams

CORRIDOR_WIDTH = 6


def corridor_world(seed: int, width: int = CORRIDOR_WIDTH, resolution: float = 0.1) -> World:
    """T-junction layout; ``seed`` sets the lengths and which arm holds the target.

    The start is at the west end of the corridor, on its center line,
    facing east.
    """
    rng = np.random.default_rng(seed)
    length = int(rng.integers(30, 45))
    arm = int(rng.integers(18, 26))
    height = 2 * arm + width + 2
    obstacles = np.ones((height, length + width + 2), dtype=bool)
    r0 = height // 2 - width // 2
    obstacles[r0:r0 + width, 1:length + 1] = False
    obstacles[1:height - 1, length + 1:length + 1 + width] = False
    target_row = 1 if seed % 2 else height - 2
    target = (target_row, length + 1 + width // 2)
    start = GridPose(2.5, r0 + width / 2, 0.0)
    return World(obstacles, (target,), start, seed, resolution, "tv")


class OscillationScorer:
    """Adversary: forward and backward 0, left and right 1; honest detection."""

    def __init__(self, world: World, cone: ConeParams = ConeParams()):
        self.world = world
        self.cone = cone

    def score(self, request) -> ScorerResponse:
        found = request.pose is not None and detect_target(self.world, request.pose, self.cone) is not None
        return ScorerResponse(ActionScores(forward=0.0, backward=0.0, left=1.0, right=1.0), found,
                              "the sides look more promising than the way ahead")
