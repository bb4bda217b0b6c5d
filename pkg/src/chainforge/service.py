"""HTTP service for the manual verification stage.

State is a fold over the shared queue event log, so the service, the
pipeline's queue stage, and any auditor all see the same truth; the service
itself only ever appends decision events.  ``/api/queue/next`` hands out
items under a 10-minute lease so concurrent reviewers do not collide.
"""

from __future__ import annotations

import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

try:
    import fcntl
except ImportError:
    fcntl = None

from .chain import parse_chain, serialize_chain
from .datastore import PENDING, QueueLog, replay_queue
from .validate import ValidationConfig, validate_chain

DEFAULT_LEASE_SECONDS = 600.0


class ServiceAlreadyRunning(RuntimeError):
    pass


class ReviewService:
    """Queue reads, leases, and decision writes behind the HTTP endpoints."""

    def __init__(
        self,
        queue_log: QueueLog,
        validation: ValidationConfig = ValidationConfig(),
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        clock=time.time,
    ):
        self.queue_log = queue_log
        self.validation = validation
        self.lease_seconds = lease_seconds
        self.clock = clock
        self._leases: dict[str, tuple[str, float]] = {}
        self._mutex = threading.Lock()
        self._instance_lock_fh = None

    # -- single-instance advisory lock --------------------------------------

    def acquire_instance_lock(self) -> None:
        lock_path = self.queue_log.path.with_name(
            self.queue_log.path.name + ".service.lock"
        )
        lock_path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(lock_path, "a+")
        if fcntl is not None:
            try:
                fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError:
                fh.close()
                raise ServiceAlreadyRunning(
                    f"another review service holds {lock_path}"
                ) from None
        self._instance_lock_fh = fh

    def release_instance_lock(self) -> None:
        if self._instance_lock_fh is not None:
            if fcntl is not None:
                fcntl.flock(self._instance_lock_fh.fileno(), fcntl.LOCK_UN)
            self._instance_lock_fh.close()
            self._instance_lock_fh = None

    # -- queue operations -----------------------------------------------------

    def _state(self):
        return replay_queue(self.queue_log.path)

    def _lease_active(self, item_id: str, now: float) -> bool:
        lease = self._leases.get(item_id)
        return lease is not None and lease[1] > now

    def next_item(self, reviewer: str) -> dict | None:
        """Oldest pending item without an active lease; leases it."""
        now = self.clock()
        state = self._state()
        with self._mutex:
            for item in state.pending_items():
                lease = self._leases.get(item.item_id)
                if lease is not None and lease[1] > now and lease[0] != reviewer:
                    continue
                self._leases[item.item_id] = (reviewer, now + self.lease_seconds)
                return item.to_dict()
        return None

    def get_item(self, item_id: str) -> dict | None:
        item = self._state().items.get(item_id)
        return item.to_dict() if item else None

    def decide(
        self,
        item_id: str,
        action: str,
        reviewer: str,
        chain_text: str | None = None,
        reason: str | None = None,
    ) -> tuple[int, dict]:
        """Returns (http_status, body).  Decisions on non-pending items are
        409 and change nothing, so identical retries are safe."""
        state = self._state()
        item = state.items.get(item_id)
        if item is None:
            return 404, {"error": f"unknown item {item_id!r}"}
        if item.state != PENDING:
            return 409, {
                "error": f"item already {item.state}",
                "item": item.to_dict(),
            }
        if action not in ("approve", "edit", "reject"):
            return 400, {"error": f"unknown action {action!r}"}
        if not reviewer:
            return 400, {"error": "reviewer is required"}

        canonical = None
        if action == "edit":
            if not chain_text:
                return 400, {"error": "edit needs a chain"}
            report = validate_chain(chain_text, self.validation)
            if not report.ok:
                return 400, {
                    "error": "edited chain failed validation",
                    "validation": report.to_dict(),
                }
            canonical = serialize_chain(parse_chain(chain_text))
        if action == "reject" and not (reason or "").strip():
            return 400, {"error": "reject needs a reason"}

        self.queue_log.decide(
            item_id,
            action,
            reviewer=reviewer,
            ts=self.clock(),
            chain=canonical,
            reason=reason,
        )
        with self._mutex:
            self._leases.pop(item_id, None)
        updated = self._state().items[item_id]
        return 200, {"item": updated.to_dict()}

    def stats(self) -> dict:
        state = self._state()
        out: dict = dict(state.counts())
        out["anomalies"] = len(state.anomalies)
        if state.truncated_at is not None:
            out["truncated_at"] = state.truncated_at
        return out

    def video_target(self, sample_id: str) -> tuple[str, str] | None:
        """('redirect', url) for remote uris, ('file', path) for local ones."""
        state = self._state()
        candidates = [
            it for it in state.items.values() if it.sample_id == sample_id
        ]
        if not candidates:
            return None
        item = max(candidates, key=lambda it: it.enqueue_order)
        uri = (item.context or {}).get("video_uri") or ""
        if uri.startswith("http://") or uri.startswith("https://"):
            return ("redirect", uri)
        if uri and Path(uri).is_file():
            return ("file", uri)
        return None


_ITEM_DECISION_RE = re.compile(r"^/api/items/([^/]+)/decision$")
_ITEM_RE = re.compile(r"^/api/items/([^/]+)$")
_VIDEO_RE = re.compile(r"^/api/video/([^/]+)$")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".mp4": "video/mp4",
    ".webm": "video/webm",
}


def _make_handler(service: ReviewService, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet test output
            del fmt, args

        def _send_json(self, status: int, body: dict) -> None:
            blob = json.dumps(body, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(blob)))
            self.end_headers()
            self.wfile.write(blob)

        def _send_file(self, path: Path) -> None:
            data = path.read_bytes()
            self.send_response(200)
            ctype = _CONTENT_TYPES.get(path.suffix, "application/octet-stream")
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            parsed = urlparse(self.path)
            path = parsed.path
            if path == "/healthz":
                self._send_json(200, {"ok": True})
                return
            if path == "/api/stats":
                self._send_json(200, service.stats())
                return
            if path == "/api/queue/next":
                params = parse_qs(parsed.query)
                reviewer = (params.get("reviewer") or ["anonymous"])[0]
                item = service.next_item(reviewer)
                if item is None:
                    self._send_json(200, {"item": None})
                else:
                    self._send_json(200, {"item": item})
                return
            m = _ITEM_RE.match(path)
            if m:
                item = service.get_item(m.group(1))
                if item is None:
                    self._send_json(404, {"error": "unknown item"})
                else:
                    self._send_json(200, {"item": item})
                return
            m = _VIDEO_RE.match(path)
            if m:
                target = service.video_target(m.group(1))
                if target is None:
                    self._send_json(404, {"error": "no video for sample"})
                elif target[0] == "redirect":
                    self.send_response(302)
                    self.send_header("Location", target[1])
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                else:
                    self._send_file(Path(target[1]))
                return
            if ui_dir is not None:
                rel = "index.html" if path == "/" else path.lstrip("/")
                candidate = (ui_dir / rel).resolve()
                if candidate.is_file() and str(candidate).startswith(
                    str(ui_dir.resolve())
                ):
                    self._send_file(candidate)
                    return
            self._send_json(404, {"error": "not found"})

        def do_POST(self):
            parsed = urlparse(self.path)
            m = _ITEM_DECISION_RE.match(parsed.path)
            if not m:
                self._send_json(404, {"error": "not found"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            try:
                body = json.loads(raw.decode("utf-8")) if raw else {}
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._send_json(400, {"error": "body must be JSON"})
                return
            status, payload = service.decide(
                m.group(1),
                action=str(body.get("action") or ""),
                reviewer=str(body.get("reviewer") or ""),
                chain_text=body.get("chain"),
                reason=body.get("reason"),
            )
            self._send_json(status, payload)

    return Handler


def serve_review(
    service: ReviewService,
    port: int,
    host: str = "127.0.0.1",
    ui_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Bind the service; caller runs serve_forever() (or a thread does)."""
    service.acquire_instance_lock()
    handler = _make_handler(service, Path(ui_dir) if ui_dir else None)
    server = ThreadingHTTPServer((host, port), handler)

    original_shutdown = server.server_close

    def closing():
        original_shutdown()
        service.release_instance_lock()

    server.server_close = closing  # type: ignore[method-assign]
    return server
