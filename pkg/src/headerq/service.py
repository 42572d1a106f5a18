"""HTTP quarantine-decision endpoint.

Endpoints (bodies are single-line JSON objects)::

    POST /v1/scan           ScanRequest  -> ScanResponse
    GET  /v1/health         -> {"status": "ok", "model_version": ...}
    POST /v1/admin/reload   {"model_path": optional} -> {"model_version": ...}

The service fails open: when a request's deadline passes before a decision
is ready, the answer is ``quarantine=false`` with ``deadline_exceeded=true``
and the message is delivered as usual. Scoring runs on a bounded worker pool
and the handler waits at most the remaining budget for it.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import asdict, dataclass, fields
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .features import encode_example
from .model import ModelFileError, TrainedModel, forward, load_model

log = logging.getLogger(__name__)

MAX_BODY = 1 << 20


class ProtocolError(ValueError):
    pass


class StartupError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScanRequest:
    request_id: str
    message_id: str | None = None
    header_seq: tuple[str, ...] = ()
    x_mailer: str | None = None
    deadline_ms: int = 10

    @classmethod
    def from_json(cls, body: bytes | str, default_deadline_ms: int = 10) -> "ScanRequest":
        try:
            obj = json.loads(body)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ProtocolError(f"body is not JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise ProtocolError("body must be a JSON object")
        unknown = set(obj) - {f.name for f in fields(cls)}
        if unknown:
            raise ProtocolError(f"unknown field(s): {', '.join(sorted(unknown))}")
        rid = obj.get("request_id")
        if not isinstance(rid, str) or not rid:
            raise ProtocolError("request_id must be a nonempty string")
        for name in ("message_id", "x_mailer"):
            if obj.get(name) is not None and not isinstance(obj[name], str):
                raise ProtocolError(f"{name} must be a string or null")
        seq = obj.get("header_seq", [])
        if seq is None:
            seq = []
        if not isinstance(seq, list) or not all(isinstance(h, str) for h in seq):
            raise ProtocolError("header_seq must be a list of strings")
        deadline = obj.get("deadline_ms", default_deadline_ms)
        if isinstance(deadline, bool) or not isinstance(deadline, int) or deadline < 1:
            raise ProtocolError("deadline_ms must be a positive integer")
        return cls(
            rid, obj.get("message_id"), tuple(h.strip().lower() for h in seq),
            obj.get("x_mailer"), deadline,
        )

    def to_json(self) -> str:
        d = asdict(self)
        d["header_seq"] = list(self.header_seq)
        return json.dumps(d, separators=(",", ":"))


@dataclass(frozen=True)
class ScanResponse:
    request_id: str
    quarantine: bool
    score: float
    model_version: str
    deadline_exceeded: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


def _env(name, default, cast=str):
    raw = os.environ.get(name)
    return default if raw in (None, "") else cast(raw)


@dataclass
class ServiceConfig:
    """Every field can also come from a ``HEADERQ_*`` environment variable."""

    host: str = "127.0.0.1"
    port: int = 8080
    model_path: str = "model.hq"
    threshold: float | None = None
    deadline_ms: int = 10
    max_concurrent: int = 4

    def __post_init__(self):
        if self.threshold is not None and not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold override must be in (0, 1)")
        if self.deadline_ms < 1 or self.max_concurrent < 1:
            raise ValueError("deadline_ms and max_concurrent must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "ServiceConfig":
        values = dict(
            host=_env("HEADERQ_HOST", cls.host),
            port=_env("HEADERQ_PORT", cls.port, int),
            model_path=_env("HEADERQ_MODEL", cls.model_path),
            threshold=_env("HEADERQ_THRESHOLD", None, float),
            deadline_ms=_env("HEADERQ_DEADLINE_MS", cls.deadline_ms, int),
            max_concurrent=_env("HEADERQ_MAX_CONCURRENT", cls.max_concurrent, int),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class Snapshot:
    model: TrainedModel
    threshold: float

    @property
    def version(self) -> str:
        return self.model.version


def _snapshot(model: TrainedModel, override: float | None) -> Snapshot:
    threshold = override if override is not None else model.threshold
    if threshold is None:
        raise StartupError("model has no calibrated threshold and none was configured")
    return Snapshot(model, threshold)


def handle_scan(req: ScanRequest, snap: Snapshot, started: float | None = None,
                delay_s: float = 0.0) -> ScanResponse:
    """Synchronous decision with cooperative deadline checks.

    ``delay_s`` injects artificial scoring latency for fault testing.
    """
    started = time.monotonic() if started is None else started
    budget = req.deadline_ms / 1000.0

    def late():
        return time.monotonic() - started > budget

    if late():
        return ScanResponse(req.request_id, False, 0.0, snap.version, True)
    x = encode_example(req.message_id, req.header_seq, req.x_mailer, snap.model.vocabs)
    if late():
        return ScanResponse(req.request_id, False, 0.0, snap.version, True)
    if delay_s:
        time.sleep(delay_s)
    score = forward(snap.model, x)
    if late():
        return ScanResponse(req.request_id, False, score, snap.version, True)
    return ScanResponse(req.request_id, score >= snap.threshold, score, snap.version, False)


class QuarantineService:
    """Model snapshot holder plus the deadline-bounded scoring path.

    Handlers read :attr:`snapshot` once per request; :meth:`reload` replaces
    it with a single reference assignment, so a response never mixes models.
    """

    def __init__(self, cfg: ServiceConfig, model: TrainedModel | None = None):
        self.cfg = cfg
        if model is None:
            try:
                model = load_model(cfg.model_path)
            except ModelFileError as exc:
                raise StartupError(str(exc)) from None
        self.snapshot = _snapshot(model, cfg.threshold)
        self.pool = ThreadPoolExecutor(max_workers=cfg.max_concurrent,
                                       thread_name_prefix="headerq-score")
        self._reload_lock = threading.Lock()
        self.fault_delay_s = 0.0

    def scan(self, req: ScanRequest, started: float | None = None) -> ScanResponse:
        started = time.monotonic() if started is None else started
        snap = self.snapshot
        fut = self.pool.submit(handle_scan, req, snap, started, self.fault_delay_s)
        remaining = req.deadline_ms / 1000.0 - (time.monotonic() - started)
        try:
            return fut.result(timeout=max(remaining, 0.0))
        except FutureTimeout:
            return ScanResponse(req.request_id, False, 0.0, snap.version, True)

    def reload(self, path: str | None = None) -> str:
        with self._reload_lock:
            path = path or self.cfg.model_path
            model = load_model(path)  # raises; old snapshot stays in place
            snap = _snapshot(model, self.cfg.threshold)
            self.snapshot = snap
            self.cfg.model_path = path
            log.info("reloaded model %s from %s", snap.version, path)
            return snap.version

    def close(self):
        self.pool.shutdown(wait=False, cancel_futures=True)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # headers and body go out in separate writes; Nagle would hold the second
    disable_nagle_algorithm = True
    server: "QuarantineHTTPServer"

    def log_message(self, fmt, *args):
        log.debug("%s - " + fmt, self.address_string(), *args)

    def _send(self, status: int, body: str):
        data = (body + "\n").encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status: int, message: str):
        self._send(status, json.dumps({"error": message}))

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            raise ProtocolError("body too large")
        return self.rfile.read(length)

    def do_GET(self):
        svc = self.server.service
        if self.path == "/v1/health":
            self._send(200, json.dumps({"status": "ok", "model_version": svc.snapshot.version}))
        else:
            self._error(404, f"no such endpoint: {self.path}")

    def do_POST(self):
        started = time.monotonic()
        svc = self.server.service
        try:
            body = self._body()
        except (ProtocolError, ValueError) as exc:
            self._error(400, str(exc))
            return
        if self.path == "/v1/scan":
            try:
                req = ScanRequest.from_json(body, svc.cfg.deadline_ms)
            except ProtocolError as exc:
                self._error(400, str(exc))
                return
            self._send(200, svc.scan(req, started).to_json())
        elif self.path == "/v1/admin/reload":
            path = None
            if body.strip():
                try:
                    obj = json.loads(body)
                    path = obj.get("model_path") if isinstance(obj, dict) else None
                except json.JSONDecodeError as exc:
                    self._error(400, f"body is not JSON: {exc}")
                    return
            try:
                version = svc.reload(path)
            except (ModelFileError, StartupError) as exc:
                self._error(409, f"reload rejected: {exc}")
                return
            self._send(200, json.dumps({"model_version": version}))
        else:
            self._error(404, f"no such endpoint: {self.path}")


class QuarantineHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 256

    def __init__(self, service: QuarantineService, address=None):
        self.service = service
        addr = address or (service.cfg.host, service.cfg.port)
        super().__init__(addr, _Handler)


def make_server(cfg: ServiceConfig, model: TrainedModel | None = None) -> QuarantineHTTPServer:
    service = QuarantineService(cfg, model)
    try:
        return QuarantineHTTPServer(service)
    except OSError as exc:
        service.close()
        raise StartupError(f"cannot bind {cfg.host}:{cfg.port}: {exc}") from None


def serve(cfg: ServiceConfig) -> None:
    httpd = make_server(cfg)
    host, port = httpd.server_address[:2]
    log.info("serving model %s on http://%s:%s", httpd.service.snapshot.version, host, port)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
        httpd.service.close()
