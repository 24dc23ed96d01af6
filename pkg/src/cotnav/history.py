"""Bounded action history, loop detection and the fallback action."""

from __future__ import annotations

import math
from collections import deque
from enum import Enum

from .occupancy import GridPose

CAPACITY = 10
_MOVE_EPS = 1e-9


class AgentAction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"

    @property
    def prompt_name(self) -> str:
        return _PROMPT_NAMES[self]


_PROMPT_NAMES = {
    AgentAction.FORWARD: "go forward",
    AgentAction.BACKWARD: "go backward",
    AgentAction.TURN_LEFT: "turn left",
    AgentAction.TURN_RIGHT: "turn right",
    AgentAction.STOP: "stop",
}


class ActionHistory:
    """The last ``capacity`` actions with the pose each one produced.

    ``origin`` is the pose before the oldest retained entry; it lets the
    oldest action be judged as displacing or not.
    """

    def __init__(self, capacity: int = CAPACITY, origin: GridPose | None = None):
        self.capacity = capacity
        self.origin = origin
        self.entries: deque[tuple[AgentAction, GridPose]] = deque()

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def push(self, action: AgentAction, pose: GridPose) -> ActionHistory:
        self.entries.append((action, pose))
        while len(self.entries) > self.capacity:
            _, self.origin = self.entries.popleft()
        return self

    def actions(self) -> list[AgentAction]:
        return [a for a, _ in self.entries]

    def render_for_prompt(self) -> str:
        if not self.entries:
            return ""
        names = ", ".join(a.prompt_name for a in self.actions())
        return (f"Recent actions (oldest first): {names}\n"
                "If these actions turn back and forth or leave the robot in the same spot, "
                "choose an action that takes it somewhere new.")


def push(h: ActionHistory, action: AgentAction, pose: GridPose) -> ActionHistory:
    return h.push(action, pose)


def _alternates(actions: list[AgentAction]) -> bool:
    turns = {AgentAction.TURN_LEFT, AgentAction.TURN_RIGHT}
    if any(a not in turns for a in actions):
        return False
    return all(a != b for a, b in zip(actions, actions[1:]))


def detect_stagnation(h: ActionHistory, window: int = 8, disp_threshold: float = 2.0,
                      oscillation_window: int | None = None) -> bool:
    """True when the recent history shows no progress.

    Stuck means either the net displacement over the last ``window`` entries
    is below ``disp_threshold`` cells, or the last ``oscillation_window``
    actions (default: ``window``) strictly alternate left/right turns.
    """
    if window > h.capacity:
        raise ValueError(f"window {window} exceeds history capacity {h.capacity}")
    osc = window if oscillation_window is None else oscillation_window
    entries = list(h.entries)
    if len(entries) >= window:
        first, last = entries[-window][1], entries[-1][1]
        if first.distance_to(last) < disp_threshold:
            return True
    if len(entries) >= osc and _alternates([a for a, _ in entries[-osc:]]):
        return True
    return False


def fallback_action(h: ActionHistory) -> AgentAction:
    """Most recent action that changed the agent's position; Forward if none."""
    entries = list(h.entries)
    for i in range(len(entries) - 1, -1, -1):
        prev = entries[i - 1][1] if i > 0 else h.origin
        if prev is None:
            continue
        action, pose = entries[i]
        if math.hypot(pose.x - prev.x, pose.y - prev.y) > _MOVE_EPS:
            return action
    return AgentAction.FORWARD
