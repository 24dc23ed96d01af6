"""A tiny chat-completions server that replays canned reply bodies.

Used to exercise the remote scorer end to end without a model. Replies are
served round-robin; each request is recorded for inspection.
"""

from __future__ import annotations

import itertools
import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .prompts import render_answer
from .value_map import ActionScores

DEFAULT_BODIES = (
    render_answer(ActionScores(forward=0.9, backward=0.1, left=0.0, right=0.0)),
    render_answer(ActionScores(forward=0.6, backward=0.1, left=0.3, right=0.2), action="Turn left"),
    render_answer(ActionScores(forward=0.5, backward=0.2, left=0.2, right=0.4), action="Turn right"),
)


class StubServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, bodies, host="127.0.0.1", port=0, status=200, raw=False):
        self.bodies = itertools.cycle(list(bodies))
        self.status = status
        self.raw = raw  # send bodies verbatim instead of wrapping them
        self.requests: list[dict] = []
        self.lock = threading.Lock()
        super().__init__((host, port), _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


class _Handler(BaseHTTPRequestHandler):
    server: StubServer

    def log_message(self, format, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        with self.server.lock:
            try:
                self.server.requests.append(json.loads(raw))
            except ValueError:
                self.server.requests.append({"unparsable": raw.decode("utf-8", "replace")})
            body = next(self.server.bodies)
        if self.server.raw:
            out = body.encode() if isinstance(body, str) else body
        else:
            out = json.dumps({
                "id": "stub",
                "object": "chat.completion",
                "choices": [{"index": 0, "finish_reason": "stop",
                             "message": {"role": "assistant", "content": body}}],
            }).encode()
        self.send_response(self.server.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)


@contextmanager
def serve_stub(bodies=DEFAULT_BODIES, status: int = 200, raw: bool = False):
    """Run a stub server on a free local port for the duration of the block."""
    server = StubServer(bodies, status=status, raw=raw)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()
        thread.join()
