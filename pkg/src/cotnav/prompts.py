"""Prompt templates for the scorer and parsing of its replies."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources

from .history import AgentAction
from .value_map import ActionScores

log = logging.getLogger(__name__)

TARGET_TOKEN = "[TARGET_OBJECT]"
HISTORY_TOKEN = "[HISTORY]"


class CoTLevel(str, Enum):
    NONE = "none"
    BASIC = "basic"
    INTERMEDIATE = "intermediate"
    FULL = "full"


_TEMPLATE_FILES = {
    CoTLevel.NONE: "no_cot.txt",
    CoTLevel.BASIC: "basic.txt",
    CoTLevel.INTERMEDIATE: "intermediate.txt",
    CoTLevel.FULL: "full.txt",
}


class PromptError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class PromptRequest:
    level: CoTLevel
    target_category: str
    history_rendering: str = ""


@dataclass
class ParsedResponse:
    scores: ActionScores
    target_found: bool = False
    room_label: str | None = None
    recommended_action: AgentAction | None = None
    reasoning: str = ""


@lru_cache(maxsize=None)
def load_template(level: CoTLevel) -> str:
    text = resources.files("cotnav.templates").joinpath(_TEMPLATE_FILES[CoTLevel(level)]).read_text("utf-8")
    return text[:-1] if text.endswith("\n") else text


def generate_prompt(req: PromptRequest) -> str:
    target = req.target_category.strip()
    if not target:
        raise PromptError("target category must be non-empty")
    text = load_template(req.level)
    history = req.history_rendering.strip("\n")
    if history:
        text = text.replace(HISTORY_TOKEN + "\n", history + "\n\n")
    else:
        text = text.replace(HISTORY_TOKEN + "\n", "")
    return text.replace(TARGET_TOKEN, target)


# Canonical response fields each template asks for, keyed by the marker
# text that requests them.
_FIELD_MARKERS = {
    "scores": ("Go forward:",),
    "action": ("Best Action:", "Recommended Action"),
    "room": ("Area Type:", "Part of the House"),
    "plausibility": ("Target Likelihood in Area:", "Be Found Here?"),
    "target_found": ("Have You Found the",),
}


def response_fields(level: CoTLevel) -> frozenset[str]:
    """Canonical names of the answer fields a level's template requests."""
    text = load_template(level)
    # only the requested answer structure counts, not the task description
    return frozenset(name for name, markers in _FIELD_MARKERS.items()
                     if any(m in text for m in markers))


_NUM = r"([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)"
_SEP = r"[\s*_`\]\)]*[:=][\s*_`\[]*"
_LONG = {
    "forward": re.compile(r"go\s+forward" + _SEP + _NUM, re.I),
    "backward": re.compile(r"go\s+backward" + _SEP + _NUM, re.I),
    "right": re.compile(r"turn\s+right" + _SEP + _NUM, re.I),
    "left": re.compile(r"turn\s+left" + _SEP + _NUM, re.I),
}
_COMPACT = {
    key: re.compile(r"(?<![A-Za-z0-9_])" + letter + r"\s*[:=]\s*" + _NUM, re.I)
    for key, letter in (("forward", "F"), ("backward", "B"), ("right", "R"), ("left", "L"))
}
_FOUND = re.compile(r"have\s+you\s+found\s+the\b[^?\n]{0,200}\?[\s*_:\-\[\]]*(yes|no)\b", re.I)
_ROOM = re.compile(r"(?:part\s+of\s+the\s+house|area\s+type)[\s*_]*:[\s*_]*([^\n]*)", re.I)
_ACTION = re.compile(r"(?:recommended\s+action|best\s+action)[\s*_]*:[\s*_]*([^\n]*)", re.I)


def _clamp(name: str, value: float) -> float:
    if value != value:  # NaN never matches _NUM, but guard anyway
        value = 0.0
    if value < 0.0 or value > 1.0:
        log.warning("clamping %s score %r into [0, 1]", name, value)
        return min(1.0, max(0.0, value))
    return value


def _action_from_text(text: str) -> AgentAction | None:
    t = text.lower()
    for word, action in (("forward", AgentAction.FORWARD), ("backward", AgentAction.BACKWARD),
                         ("left", AgentAction.TURN_LEFT), ("right", AgentAction.TURN_RIGHT),
                         ("stop", AgentAction.STOP)):
        if word in t:
            return action
    return None


def parse_response(text: str | bytes) -> ParsedResponse:
    """Pull action scores and auxiliary fields out of a free-form reply.

    Accepts the long score lines ("Go forward: 0.8") and the compact form
    ("F:0.9, B:0.1"); the last occurrence of each wins. Raises
    :class:`ParseError` when any of the four scores is missing.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    found: dict[str, float] = {}
    for table in (_LONG, _COMPACT):
        for key, rx in table.items():
            if key in found:
                continue
            matches = rx.findall(text)
            if matches:
                try:
                    found[key] = _clamp(key, float(matches[-1]))
                except (ValueError, OverflowError):
                    continue
    missing = [k for k in ("forward", "backward", "left", "right") if k not in found]
    if missing:
        raise ParseError(f"missing scores for {', '.join(missing)}", text)

    m = _FOUND.search(text)
    target_found = bool(m) and m.group(1).lower() == "yes"
    room = None
    m = _ROOM.search(text)
    if m:
        room = m.group(1).strip(" *_`[]\t\r") or None
    action = None
    m = _ACTION.search(text)
    if m:
        action = _action_from_text(m.group(1))
    return ParsedResponse(ActionScores(**found), target_found, room, action, text)


def render_answer(scores: ActionScores, target: str = "tv", found: bool = False,
                  room: str = "corridor", action: str = "Go forward") -> str:
    """A reply laid out like the full template's response structure."""
    yes_no = "Yes" if found else "No"
    return (
        f"1. **Part of the House**: {room}\n"
        "- Reasoning: The view and map are consistent with this area.\n"
        f"2. **Can a {target} Be Found Here?**: {yes_no}\n"
        "- Reasoning: Based on the layout.\n"
        f"3. **Have You Found the {target}?**: {yes_no}\n"
        f"4. **Recommended Action**: {action}\n"
        "- Reasoning: It follows from steps 1 and 2.\n"
        "5. **Probability Scores for Each Action**:\n"
        f"- Go forward: {scores.forward!r}\n"
        f"- Go backward: {scores.backward!r}\n"
        f"- Turn right: {scores.right!r}\n"
        f"- Turn left: {scores.left!r}\n"
    )
