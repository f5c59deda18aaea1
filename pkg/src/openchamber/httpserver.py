"""Minimal threaded HTTP plumbing shared by the API and replication servers.

Routes are (method, path pattern) pairs; ``{name}`` segments become keyword
arguments. Handlers take a Request and return a Response. Servers run on a
daemon thread and stop cleanly via the returned handle.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qsl, urlsplit

log = logging.getLogger("openchamber.http")


class BindFailure(OSError):
    """The requested address could not be bound."""


class HttpError(Exception):
    """Turns into a JSON error response with a typed code."""

    def __init__(self, status: int, code: str, message: str, **extra):
        super().__init__(message)
        self.status = status
        self.code = code
        self.extra = extra


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, str]
    headers: dict[str, str]
    body: bytes

    def json(self):
        if not self.body:
            raise HttpError(400, "bad_request", "request body must be JSON")
        try:
            return json.loads(self.body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise HttpError(400, "bad_request", f"invalid JSON body: {exc}") from exc


@dataclass
class Response:
    status: int = 200
    body: bytes = b""
    content_type: str = "application/json"
    headers: dict[str, str] = field(default_factory=dict)


def json_response(obj, status: int = 200) -> Response:
    return Response(status, json.dumps(obj, ensure_ascii=False).encode("utf-8"))


def error_response(status: int, code: str, message: str, **extra) -> Response:
    payload = {"code": code, "message": message}
    payload.update(extra)
    return json_response(payload, status)


class HttpApp:
    """A route table with optional bearer-token auth and CORS headers."""

    def __init__(self, *, token: str | None = None, cors_origin: str | None = None,
                 open_paths: tuple[str, ...] = ("/health",)):
        self.token = token or None
        self.cors_origin = cors_origin
        self.open_paths = open_paths
        self._routes: list[tuple[str, re.Pattern, object]] = []

    def add(self, method: str, pattern: str, handler) -> None:
        regex = re.compile(
            "^" + re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", pattern) + "$")
        self._routes.append((method.upper(), regex, handler))

    def handle(self, request: Request) -> Response:
        if request.method == "OPTIONS" and self.cors_origin:
            return self._cors(Response(204))
        matched_path = False
        for method, regex, handler in self._routes:
            m = regex.match(request.path)
            if not m:
                continue
            matched_path = True
            if method != request.method:
                continue
            if not self._authorized(request):
                return self._cors(error_response(401, "unauthorized",
                                                 "missing or wrong bearer token"))
            try:
                response = handler(request, **m.groupdict())
            except HttpError as exc:
                response = error_response(exc.status, exc.code, str(exc), **exc.extra)
            except Exception:
                log.exception("handler failure for %s %s", request.method, request.path)
                response = error_response(500, "internal_error", "unexpected server error")
            return self._cors(response)
        if matched_path:
            return self._cors(error_response(405, "method_not_allowed",
                                             f"{request.method} not supported here"))
        return self._cors(error_response(404, "not_found", f"no route for {request.path}"))

    def _authorized(self, request: Request) -> bool:
        if self.token is None or request.path in self.open_paths:
            return True
        return request.headers.get("authorization", "") == f"Bearer {self.token}"

    def _cors(self, response: Response) -> Response:
        if self.cors_origin:
            response.headers.setdefault("Access-Control-Allow-Origin", self.cors_origin)
            response.headers.setdefault("Access-Control-Allow-Methods",
                                        "GET, POST, PATCH, OPTIONS")
            response.headers.setdefault("Access-Control-Allow-Headers",
                                        "Content-Type, Authorization, X-Sync-Version")
        return response


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route access logs through logging
        log.debug("%s %s", self.address_string(), fmt % args)

    def _dispatch(self):
        split = urlsplit(self.path)
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        request = Request(
            method=self.command,
            path=split.path,
            query=dict(parse_qsl(split.query)),
            headers={k.lower(): v for k, v in self.headers.items()},
            body=body,
        )
        response = self.server.app.handle(request)
        payload = response.body
        self.send_response(response.status)
        self.send_header("Content-Type", response.content_type)
        self.send_header("Content-Length", str(len(payload)))
        for key, value in response.headers.items():
            self.send_header(key, value)
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(payload)

    do_GET = do_POST = do_PATCH = do_PUT = do_DELETE = do_OPTIONS = do_HEAD = _dispatch


class _AppServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, app: HttpApp):
        self.app = app
        super().__init__(address, _Handler)


@dataclass
class ServerHandle:
    server: _AppServer
    thread: threading.Thread

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    @property
    def url(self) -> str:
        host = self.server.server_address[0]
        return f"http://{host}:{self.port}"

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def serve_app(app: HttpApp, host: str = "127.0.0.1", port: int = 0) -> ServerHandle:
    """Start the app on a daemon thread; port 0 picks a free port."""
    try:
        server = _AppServer((host, port), app)
    except OSError as exc:
        raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
    thread = threading.Thread(target=server.serve_forever, name="openchamber-http",
                              daemon=True)
    thread.start()
    return ServerHandle(server, thread)
