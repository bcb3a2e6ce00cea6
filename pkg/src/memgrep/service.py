"""Newline-delimited JSON transport for out-of-process scorers and annotators.

One request per connection: the client sends a single JSON object on one line,
reads exactly one JSON line back, and closes. Requests carry {"kind", "query",
"items"}; responses carry {"scores": [...]} for kind="score" or
{"annotations": [...]} for kind="annotate". A response with fewer entries than
items is an error, never padded.
"""

from __future__ import annotations

import json
import math
import socket
import socketserver
import threading
from dataclasses import dataclass
from typing import Callable

from .errors import ConfigError, PartialResponseError, ScorerUnavailableError

_MAX_LINE = 64 * 1024 * 1024


# --- endpoint addressing ---

def parse_endpoint(spec: str) -> tuple[str, object]:
    """Parse "tcp:HOST:PORT" or "unix:/path" into (family, address)."""
    if spec.startswith("tcp:"):
        rest = spec[len("tcp:"):]
        host, sep, port = rest.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ConfigError(f"bad tcp endpoint {spec!r}; expected tcp:HOST:PORT")
        return "tcp", (host, int(port))
    if spec.startswith("unix:"):
        path = spec[len("unix:"):]
        if not path:
            raise ConfigError(f"bad unix endpoint {spec!r}; expected unix:/path")
        return "unix", path
    raise ConfigError(f"unknown endpoint scheme in {spec!r}; expected tcp: or unix:")


def _connect(spec: str, timeout: float) -> socket.socket:
    family, address = parse_endpoint(spec)
    if family == "tcp":
        host, port = address  # type: ignore[misc]
        return socket.create_connection((host, port), timeout=timeout)
    sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    sock.settimeout(timeout)
    sock.connect(address)
    return sock


# --- client ---

@dataclass
class ServiceClient:
    """Blocking client for the line-protocol above.

    retries counts extra connection attempts after the first; a service that
    answers with malformed content is not retried (the failure is not
    transient).
    """

    endpoint: str
    timeout: float = 10.0
    retries: int = 1

    def request(self, payload: dict) -> dict:
        line = (json.dumps(payload, ensure_ascii=False) + "\n").encode("utf-8")
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with _connect(self.endpoint, self.timeout) as sock:
                    sock.sendall(line)
                    raw = self._read_line(sock)
                break
            except (OSError, TimeoutError) as exc:
                last_error = exc
        else:
            raise ScorerUnavailableError(
                f"service at {self.endpoint} unreachable: {last_error}"
            )
        try:
            response = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise PartialResponseError(
                f"service at {self.endpoint} sent invalid JSON: {exc}"
            ) from exc
        if not isinstance(response, dict):
            raise PartialResponseError("service response is not a JSON object")
        if "error" in response:
            raise ScorerUnavailableError(
                f"service at {self.endpoint} refused request: {response['error']}"
            )
        return response

    @staticmethod
    def _read_line(sock: socket.socket) -> bytes:
        chunks = []
        total = 0
        while True:
            chunk = sock.recv(65536)
            if not chunk:
                break
            chunks.append(chunk)
            total += len(chunk)
            if b"\n" in chunk:
                break
            if total > _MAX_LINE:
                raise PartialResponseError("service response exceeds line limit")
        raw = b"".join(chunks)
        if not raw:
            raise PartialResponseError("service closed without responding")
        return raw.split(b"\n", 1)[0]

    def score(self, query: str, items: list[str]) -> list[float]:
        response = self.request({"kind": "score", "query": query, "items": items})
        scores = response.get("scores")
        if not isinstance(scores, list) or len(scores) != len(items):
            got = len(scores) if isinstance(scores, list) else "no"
            raise PartialResponseError(
                f"expected {len(items)} scores, got {got}"
            )
        out = []
        for value in scores:
            if not isinstance(value, (int, float)) or isinstance(value, bool) \
                    or not math.isfinite(value):
                raise PartialResponseError(f"non-finite score in response: {value!r}")
            out.append(float(value))
        return out

    def annotate(self, items: list[str]) -> list[dict]:
        response = self.request({"kind": "annotate", "query": "", "items": items})
        annotations = response.get("annotations")
        if not isinstance(annotations, list) or len(annotations) != len(items):
            got = len(annotations) if isinstance(annotations, list) else "no"
            raise PartialResponseError(
                f"expected {len(items)} annotations, got {got}"
            )
        for entry in annotations:
            if not isinstance(entry, dict):
                raise PartialResponseError("annotation entry is not an object")
        return annotations


# --- reference server ---

ScoreFn = Callable[[str, list[str]], list[float]]
AnnotateFn = Callable[[list[str]], list[dict]]


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: ReferenceServer = self.server.owner  # type: ignore[attr-defined]
        for raw in self.rfile:
            try:
                reply = server.dispatch(raw.decode("utf-8"))
            except Exception as exc:  # surface handler bugs to the client
                reply = {"error": f"{type(exc).__name__}: {exc}"}
            self.wfile.write(
                (json.dumps(reply, ensure_ascii=False) + "\n").encode("utf-8")
            )
            self.wfile.flush()


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class _UnixServer(socketserver.ThreadingUnixStreamServer):
    daemon_threads = True


class ReferenceServer:
    """In-process line-protocol server for tests and local model hosts.

    Use as a context manager; .endpoint gives the client spec string.
    """

    def __init__(
        self,
        score_fn: ScoreFn | None = None,
        annotate_fn: AnnotateFn | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
        unix_path: str | None = None,
    ) -> None:
        self._score_fn = score_fn
        self._annotate_fn = annotate_fn
        if unix_path is not None:
            self._server: socketserver.BaseServer = _UnixServer(unix_path, _Handler)
            self.endpoint = f"unix:{unix_path}"
        else:
            self._server = _TCPServer((host, port), _Handler)
            bound_port = self._server.server_address[1]
            self.endpoint = f"tcp:{host}:{bound_port}"
        self._server.owner = self  # type: ignore[attr-defined]
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.05},
            daemon=True,
        )

    def dispatch(self, raw_line: str) -> dict:
        try:
            request = json.loads(raw_line)
        except json.JSONDecodeError:
            return {"error": "invalid JSON"}
        kind = request.get("kind")
        query = request.get("query", "")
        items = request.get("items", [])
        if not isinstance(items, list):
            return {"error": "items must be a list"}
        if kind == "score":
            if self._score_fn is None:
                return {"error": "scoring not supported"}
            return {"scores": self._score_fn(query, list(items))}
        if kind == "annotate":
            if self._annotate_fn is None:
                return {"error": "annotation not supported"}
            return {"annotations": self._annotate_fn(list(items))}
        return {"error": f"unknown kind {kind!r}"}

    def __enter__(self) -> "ReferenceServer":
        self._thread.start()
        return self

    def __exit__(self, *exc_info: object) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5.0)


def serve(
    score_fn: ScoreFn | None = None,
    annotate_fn: AnnotateFn | None = None,
    host: str = "127.0.0.1",
    port: int = 0,
    unix_path: str | None = None,
) -> ReferenceServer:
    """Start a ReferenceServer and return it (caller manages shutdown)."""
    server = ReferenceServer(
        score_fn=score_fn, annotate_fn=annotate_fn,
        host=host, port=port, unix_path=unix_path,
    )
    server.__enter__()
    return server
