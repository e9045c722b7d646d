"""A configurable in-process mock backend speaking the wire protocol.

Used by the test suite and the demo scripts in place of real scorer and
completion services. Behavior is injected as plain callables; the server
also records every request and can be told to fail the first N calls.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable


class MockBackendServer:
    """Localhost HTTP server implementing /v1/score and /v1/complete.

    ``score_fn(model, text)`` and ``complete_fn(prompt, max_tokens)``
    supply response values and are sent verbatim, so a misbehaving
    backend (out-of-range score, wrong types) is easy to simulate.
    """

    def __init__(
        self,
        score_fn: Callable[[str, str], float] | None = None,
        complete_fn: Callable[[str, int], str] | None = None,
        fail_first: int = 0,
    ):
        self.score_fn = score_fn or (lambda model, text: 0.5)
        self.complete_fn = complete_fn or (lambda prompt, max_tokens: "")
        self.fail_first = fail_first
        self.requests: list[tuple[str, dict]] = []
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "MockBackendServer":
        backend = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    payload = {}
                with backend._lock:
                    backend.requests.append((self.path, payload))
                    if backend.fail_first > 0:
                        backend.fail_first -= 1
                        self._reply(503, {"error": "temporarily unavailable"})
                        return
                if self.path == "/v1/score":
                    value = backend.score_fn(payload.get("model", ""), payload.get("text", ""))
                    self._reply(200, {"score": value})
                elif self.path == "/v1/complete":
                    text = backend.complete_fn(
                        payload.get("prompt", ""), payload.get("max_tokens", 0)
                    )
                    self._reply(200, {"text": text})
                else:
                    self._reply(404, {"error": f"unknown endpoint {self.path}"})

            def _reply(self, status: int, body: dict):
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "MockBackendServer":
        return self.start()

    def __exit__(self, *exc_info):
        self.stop()

    # -- introspection ------------------------------------------------------

    @property
    def url(self) -> str:
        if self._server is None:
            raise RuntimeError("server is not running")
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def request_count(self, path: str | None = None) -> int:
        with self._lock:
            if path is None:
                return len(self.requests)
            return sum(1 for p, _ in self.requests if p == path)
