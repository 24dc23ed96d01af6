"""Semantic scorers: the interface plus oracle, heuristic, uniform and remote.

A scorer turns a request (two images, a prompt, a target category) into
four action scores and a target-found flag. Oracle and heuristic scorers
are deterministic stand-ins that read the in-process ``pose``/``grid``
fields instead of pixels; the remote scorer talks to an OpenAI-compatible
chat-completions endpoint.
"""

from __future__ import annotations

import base64
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol

import httpx
import numpy as np

from .occupancy import GridPose, OccupancyGrid
from .prompts import ParseError, parse_response
from .raycast import march, wrap_angle
from .render import png_bytes
from .value_map import ANCHORS, ActionScores, ConeParams

log = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "COTNAV_API_KEY"


class ScorerError(RuntimeError):
    """A failed scoring call. ``kind`` is ``transport``, ``http`` or ``parse``."""

    def __init__(self, kind: str, message: str, cause: BaseException | None = None):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.cause = cause


@dataclass
class ScorerRequest:
    egocentric_render: np.ndarray = field(repr=False)
    topdown_render: np.ndarray = field(repr=False)
    prompt: str
    target_category: str
    # In-process context for the simulated scorers; never sent over the wire.
    pose: GridPose | None = None
    grid: OccupancyGrid | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("egocentric_render", "topdown_render"):
            img = getattr(self, name)
            if img is None or np.asarray(img).size == 0:
                raise ValueError(f"{name} must be a non-empty image")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass
class ScorerResponse:
    scores: ActionScores
    target_found: bool = False
    reasoning: str = ""
    room_label: str | None = None
    exchange: dict | None = None  # redacted wire log, remote scorer only


class Scorer(Protocol):
    def score(self, request: ScorerRequest) -> ScorerResponse: ...


def uniform_response(reason: str = "uniform") -> ScorerResponse:
    """The fallback answer: flat scores, detection left to the detector."""
    return ScorerResponse(ActionScores.uniform(), True, reason)


class UniformScorer:
    """Flat scores every step; exploration is then purely geometric."""

    def score(self, request: ScorerRequest) -> ScorerResponse:
        return uniform_response()


def _need_pose(request: ScorerRequest) -> GridPose:
    if request.pose is None:
        raise ValueError("this scorer needs request.pose")
    return request.pose


class OracleScorer:
    """Ground-truth scorer: scores peak at the anchor nearest the target bearing.

    ``scores[a] = max(0, cos(beta - anchor_a)) ** sharpness`` where beta is
    the bearing of the nearest target cell relative to the heading.
    """

    def __init__(self, world, cone: ConeParams = ConeParams(), sharpness: float = 1.0):
        self.world = world
        self.cone = cone
        self.sharpness = sharpness

    def bearing(self, pose: GridPose) -> float:
        best = min(self.world.targets,
                   key=lambda t: (math.hypot(t[1] + 0.5 - pose.x, t[0] + 0.5 - pose.y), t))
        return float(wrap_angle(math.atan2(best[0] + 0.5 - pose.y, best[1] + 0.5 - pose.x)
                                - pose.heading))

    def score(self, request: ScorerRequest) -> ScorerResponse:
        from .simworld import detect_target

        pose = _need_pose(request)
        beta = self.bearing(pose)
        vals = {k: max(0.0, math.cos(beta - a)) ** self.sharpness for k, a in ANCHORS.items()}
        found = detect_target(self.world, pose, self.cone) is not None
        return ScorerResponse(ActionScores(**vals), found, f"target bearing {beta:.4f} rad")


class HeuristicScorer:
    """Scores each action by the free depth of its sector in the known map.

    Unknown cells count as open; rays stop at known Obstacles. A sector is
    the 90 degree wedge centered on the action's anchor.
    """

    def __init__(self, cone: ConeParams = ConeParams(), rays_per_sector: int = 9):
        self.cone = cone
        self.rays_per_sector = rays_per_sector

    def sector_depths(self, pose: GridPose, grid: OccupancyGrid) -> dict[str, float]:
        n = self.rays_per_sector
        offsets = np.linspace(-math.pi / 4, math.pi / 4, n)
        keys = list(ANCHORS)
        angles = np.concatenate([pose.heading + ANCHORS[k] + offsets for k in keys])
        res = march(pose.x, pose.y, angles, self.cone.max_range, grid.shape, stop=grid.obstacle)
        depth = np.full(angles.size, self.cone.max_range, dtype=float)
        if res.ray.size:
            last = res.last_index(angles.size)
            hit = np.nonzero(res.stopped)[0]
            depth[hit] = res.t[last[hit]]
            # rays that left the grid early end at their last cell's exit
            out = np.nonzero(~res.stopped & ~res.complete)[0]
            depth[out] = np.minimum(depth[out], res.t[last[out]] + 1.0)
        depth = np.clip(depth / self.cone.max_range, 0.0, 1.0)
        return {k: float(depth[i * n:(i + 1) * n].mean()) for i, k in enumerate(keys)}

    def score(self, request: ScorerRequest) -> ScorerResponse:
        pose = _need_pose(request)
        if request.grid is None:
            raise ValueError("heuristic scorer needs request.grid")
        return ScorerResponse(ActionScores(**self.sector_depths(pose, request.grid)), False,
                              "sector free depth")


def _data_uri(img: np.ndarray) -> str:
    return "data:image/png;base64," + base64.b64encode(png_bytes(img)).decode("ascii")


def chat_url(endpoint: str) -> str:
    url = endpoint.rstrip("/")
    if url.endswith("/chat/completions"):
        return url
    if url.endswith("/v1"):
        return url + "/chat/completions"
    return url + "/v1/chat/completions"


class RemoteScorer:
    """Client for an OpenAI-compatible vision chat endpoint.

    One POST per call carrying the prompt and both renders as PNG data URIs.
    Failures surface as :class:`ScorerError`; the API key, if any, is read
    from the environment variable named by ``api_key_env``.
    """

    def __init__(self, endpoint: str, model: str = "llava-v1.6-7b", temperature: float = 0.0,
                 timeout: float = 60.0, max_tokens: int | None = None,
                 api_key_env: str = DEFAULT_API_KEY_ENV, log_bodies: bool = True):
        self.url = chat_url(endpoint)
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.max_tokens = max_tokens
        self.api_key_env = api_key_env
        self.log_bodies = log_bodies
        self._client: httpx.Client | None = None
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_client"] = None
        state["_lock"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def _get_client(self) -> httpx.Client:
        with self._lock:
            if self._client is None:
                self._client = httpx.Client(timeout=httpx.Timeout(self.timeout))
            return self._client

    def close(self):
        if self._client is not None:
            self._client.close()
            self._client = None

    def payload(self, request: ScorerRequest) -> dict:
        body = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": request.prompt},
                    {"type": "image_url", "image_url": {"url": _data_uri(request.egocentric_render)}},
                    {"type": "image_url", "image_url": {"url": _data_uri(request.topdown_render)}},
                ],
            }],
        }
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return body

    @staticmethod
    def redact(body: dict) -> dict:
        """Copy of a request body with image payloads replaced by their size."""
        out = json.loads(json.dumps(body))
        for msg in out.get("messages", []):
            for part in msg.get("content", []):
                if part.get("type") == "image_url":
                    url = part["image_url"]["url"]
                    part["image_url"]["url"] = f"<png data uri, {len(url)} chars>"
        return out

    def score(self, request: ScorerRequest) -> ScorerResponse:
        body = self.payload(request)
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        exchange = {"url": self.url, "request": self.redact(body)} if self.log_bodies else None
        t0 = time.monotonic()
        try:
            reply = self._get_client().post(self.url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise ScorerError("transport", f"{type(exc).__name__}: {exc}", exc) from exc
        if exchange is not None:
            exchange["status"] = reply.status_code
            exchange["elapsed_s"] = round(time.monotonic() - t0, 6)
        if not 200 <= reply.status_code < 300:
            raise ScorerError("http", f"status {reply.status_code}")
        try:
            text = reply.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ScorerError("parse", "reply is not a chat completion", exc) from exc
        if not isinstance(text, str):
            raise ScorerError("parse", "reply content is not text")
        if exchange is not None:
            exchange["reply"] = text
        try:
            parsed = parse_response(text)
        except ParseError as exc:
            raise ScorerError("parse", str(exc), exc) from exc
        return ScorerResponse(parsed.scores, parsed.target_found, parsed.reasoning,
                              parsed.room_label, exchange)


@dataclass(frozen=True)
class ScorerSpec:
    """Picklable description of a scorer, built fresh inside each worker."""

    kind: str = "oracle"  # oracle | heuristic | uniform | remote | oscillation
    endpoint: str | None = None
    model: str = "llava-v1.6-7b"
    temperature: float = 0.0
    timeout: float = 60.0
    api_key_env: str = DEFAULT_API_KEY_ENV
    sharpness: float = 1.0

    def __post_init__(self):
        if self.kind not in SCORER_KINDS:
            raise ValueError(f"unknown scorer {self.kind!r}; choose from {', '.join(SCORER_KINDS)}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote scorer needs an endpoint")

    def build(self, world, cone: ConeParams = ConeParams()):
        if self.kind == "oracle":
            return OracleScorer(world, cone, self.sharpness)
        if self.kind == "heuristic":
            return HeuristicScorer(cone)
        if self.kind == "uniform":
            return UniformScorer()
        if self.kind == "oscillation":
            from .scenarios import OscillationScorer
            return OscillationScorer(world, cone)
        return RemoteScorer(self.endpoint, self.model, self.temperature, self.timeout,
                            api_key_env=self.api_key_env)


SCORER_KINDS = ("oracle", "heuristic", "uniform", "remote", "oscillation")
