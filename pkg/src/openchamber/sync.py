"""Asymmetric filtered replication between a chamber store and a cloud store.

Clients push every locally-originated document to the server, where ids are
namespaced by client id so separate chambers can never collide. Clients pull
only changes matching a kind filter (recipes by default) and apply them as
pull-origin writes, which the push phase skips, so a quiet client syncs to a
fixed point in one round.

Progress survives crashes: push and pull checkpoints (plus the map of pulled
document revisions) live in an atomically-rewritten sidecar file next to the
store, and checkpoints only advance after the server acknowledged a batch.
Replays are harmless because both sides skip documents whose stored content
already matches.

Wire protocol (version 1, JSON bodies, ``X-Sync-Version: 1`` mandatory):

    POST /replicate/push        {client_id, from_seq, to_seq, docs, checksum}
    GET  /replicate/changes     ?since=S&filter=K1,K2&limit=N&exclude=CLIENT
    POST /replicate/checkpoint  {client_id, direction, seq}
    GET  /health

The checksum is CRC32 over the canonical JSON encoding of the docs list; a
mismatched batch is retried, never skipped.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import urllib.error
import urllib.parse
import urllib.request
import zlib
from dataclasses import dataclass, field

from .httpserver import (BindFailure, HttpApp, HttpError, Request, ServerHandle,
                         json_response, serve_app)
from .store import DocumentStore

log = logging.getLogger("openchamber.sync")

PROTOCOL_VERSION = 1
VERSION_HEADER = "X-Sync-Version"
BATCH_SIZE = 100
DEFAULT_PULL_FILTER = ("recipe",)
_CHECKSUM_RETRIES = 3


class NetworkUnavailable(ConnectionError):
    """The replication peer cannot be reached."""


class ProtocolVersionMismatch(Exception):
    """Peer speaks a different replication protocol version."""


class ChecksumMismatch(Exception):
    """A batch arrived corrupted; the sender retries it."""


class SyncProtocolError(Exception):
    """Any other typed error returned by the replication peer."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True, slots=True)
class ReplicationCheckpoint:
    peer_id: str
    direction: str  # push | pull
    last_acknowledged_sequence: int


@dataclass
class SyncReport:
    pushed: int = 0
    pulled: int = 0
    push_checkpoint: int = 0
    pull_checkpoint: int = 0
    conflicts: list[tuple[str, int, int]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "pushed": self.pushed,
            "pulled": self.pulled,
            "push_checkpoint": self.push_checkpoint,
            "pull_checkpoint": self.pull_checkpoint,
            "conflicts": [list(c) for c in self.conflicts],
        }


def checksum_docs(docs: list[dict]) -> int:
    canonical = json.dumps(docs, sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False).encode("utf-8")
    return zlib.crc32(canonical)


def _load_json(path: str) -> dict:
    if not os.path.exists(path):
        return {}
    with open(path, "rb") as f:
        return json.loads(f.read() or b"{}")


def _save_json_atomic(path: str, obj: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(json.dumps(obj, ensure_ascii=False).encode("utf-8"))
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


class CheckpointFile:
    """Atomically-persisted per-peer sync state next to a store file."""

    def __init__(self, path: str, peer_key: str):
        self.path = path
        self.peer_key = peer_key
        self._all = _load_json(path)
        state = self._all.setdefault(peer_key, {})
        self.push: int = state.get("push", 0)
        self.pull: int = state.get("pull", 0)
        # id -> {"server_rev": int, "local_rev": int} for pulled documents
        self.pulled: dict[str, dict] = state.get("pulled", {})

    def save(self) -> None:
        self._all[self.peer_key] = {"push": self.push, "pull": self.pull,
                                    "pulled": self.pulled}
        _save_json_atomic(self.path, self._all)


class HttpTransport:
    """JSON-over-HTTP client for the replication wire protocol."""

    def __init__(self, base_url: str, token: str | None = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout

    def get(self, path: str, params: dict | None = None) -> dict:
        url = self.base_url + path
        if params:
            url += "?" + urllib.parse.urlencode(params)
        return self._send(urllib.request.Request(url, headers=self._headers()))

    def post(self, path: str, body: dict) -> dict:
        data = json.dumps(body, ensure_ascii=False).encode("utf-8")
        headers = self._headers()
        headers["Content-Type"] = "application/json"
        return self._send(urllib.request.Request(self.base_url + path, data=data,
                                                 headers=headers, method="POST"))

    def _headers(self) -> dict[str, str]:
        headers = {VERSION_HEADER: str(PROTOCOL_VERSION)}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def _send(self, request: urllib.request.Request) -> dict:
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            try:
                payload = json.loads(exc.read().decode("utf-8"))
            except Exception:
                payload = {"code": "http_error", "message": str(exc)}
            code = payload.get("code", "http_error")
            if code == "protocol_version_mismatch":
                raise ProtocolVersionMismatch(payload.get("message", "")) from exc
            if code == "checksum_mismatch":
                raise ChecksumMismatch(payload.get("message", "")) from exc
            raise SyncProtocolError(code, payload.get("message", str(exc))) from exc
        except (urllib.error.URLError, ConnectionError, TimeoutError, OSError) as exc:
            raise NetworkUnavailable(f"{self.base_url}: {exc}") from exc


# -- client ------------------------------------------------------------------


def sync(store: DocumentStore, server_url: str, *, client_id: str,
         pull_filter: tuple[str, ...] = DEFAULT_PULL_FILTER,
         token: str | None = None, batch_size: int = BATCH_SIZE,
         transport=None, checkpoint_path: str | None = None) -> SyncReport:
    """One replication round: push everything local, pull filtered changes."""
    if transport is None:
        transport = HttpTransport(server_url, token=token)
    health = transport.get("/health")  # reachability probe; raises before any state change
    if health.get("protocol") != PROTOCOL_VERSION:
        raise ProtocolVersionMismatch(
            f"server speaks protocol {health.get('protocol')}, expected {PROTOCOL_VERSION}")

    ckpt = CheckpointFile(checkpoint_path or store.path + ".sync.json",
                          peer_key=server_url)
    report = SyncReport(push_checkpoint=ckpt.push, pull_checkpoint=ckpt.pull)

    # Push phase: stream locally-originated changes in acknowledged batches.
    while True:
        entries = store.changes_since(ckpt.push, limit=batch_size, origins=("local",))
        if not entries:
            break
        docs, seen = [], set()
        for entry in entries:
            if entry.id in seen:
                continue
            seen.add(entry.id)
            doc = store.get(entry.id)
            docs.append({"id": doc.id, "revision": doc.revision, "kind": doc.kind,
                         "body": doc.body, "deleted": doc.deleted})
        body = {"client_id": client_id, "from_seq": ckpt.push,
                "to_seq": entries[-1].seq, "docs": docs,
                "checksum": checksum_docs(docs)}
        _push_batch(transport, body)
        report.pushed += len(docs)
        ckpt.push = entries[-1].seq
        ckpt.save()
        transport.post("/replicate/checkpoint",
                       {"client_id": client_id, "direction": "push", "seq": ckpt.push})

    # Pull phase: filtered changes, excluding this client's own uploads.
    while True:
        resp = transport.get("/replicate/changes", {
            "since": ckpt.pull,
            "filter": ",".join(pull_filter),
            "limit": batch_size,
            "exclude": client_id,
        })
        for change in resp["changes"]:
            if _apply_pulled(store, ckpt, change, report.conflicts):
                report.pulled += 1
        next_since = resp["next_since"]
        if next_since == ckpt.pull:
            break
        ckpt.pull = next_since
        ckpt.save()
        transport.post("/replicate/checkpoint",
                       {"client_id": client_id, "direction": "pull", "seq": ckpt.pull})

    report.push_checkpoint = ckpt.push
    report.pull_checkpoint = ckpt.pull
    return report


def _push_batch(transport, body: dict) -> dict:
    for attempt in range(_CHECKSUM_RETRIES):
        try:
            return transport.post("/replicate/push", body)
        except ChecksumMismatch:
            log.warning("push batch %s..%s failed its checksum, retrying",
                        body["from_seq"], body["to_seq"])
    raise ChecksumMismatch(
        f"batch {body['from_seq']}..{body['to_seq']} kept failing after "
        f"{_CHECKSUM_RETRIES} attempts")


def _apply_pulled(store: DocumentStore, ckpt: CheckpointFile, change: dict,
                  conflicts: list) -> bool:
    doc = change["doc"]
    doc_id = change["id"]
    kind = change["kind"]
    server_rev = doc["revision"]
    local = store.get(doc_id)
    meta = ckpt.pulled.get(doc_id)

    if (local is not None and local.kind == kind and local.body == doc["body"]
            and local.deleted == doc["deleted"]):
        ckpt.pulled[doc_id] = {"server_rev": server_rev, "local_rev": local.revision}
        return False
    if local is not None and not (meta and meta.get("local_rev") == local.revision):
        # Diverged locally since the last pull: server wins, local copy survives.
        store.put(f"{doc_id}~conflict~{local.revision}", local.kind, local.body,
                  deleted=local.deleted, origin="local")
        conflicts.append((doc_id, local.revision, server_rev))
    rev = store.put(doc_id, kind, doc["body"], deleted=doc["deleted"], origin="pull")
    ckpt.pulled[doc_id] = {"server_rev": server_rev, "local_rev": rev}
    return True


# -- server ------------------------------------------------------------------


class ReplicationServer:
    """The cloud-side store endpoint; safe for concurrent client sessions."""

    def __init__(self, store: DocumentStore):
        self.store = store
        self._lock = threading.Lock()
        self._peers_path = store.path + ".peers.json"
        self._peers: dict[str, dict] = _load_json(self._peers_path)

    def build_app(self, token: str | None = None) -> HttpApp:
        app = HttpApp(token=token, open_paths=("/health",))
        app.add("GET", "/health", self.health)
        app.add("POST", "/replicate/push", self.push)
        app.add("GET", "/replicate/changes", self.changes)
        app.add("POST", "/replicate/checkpoint", self.checkpoint)
        return app

    # handlers ---------------------------------------------------------

    def health(self, request: Request):
        return json_response({"status": "ok", "protocol": PROTOCOL_VERSION,
                              "last_seq": self.store.last_seq})

    def push(self, request: Request):
        _require_version(request)
        body = request.json()
        client_id = _require(body, "client_id", str)
        docs = _require(body, "docs", list)
        if checksum_docs(docs) != body.get("checksum"):
            raise HttpError(400, "checksum_mismatch",
                            "batch checksum does not match its contents")
        stored = skipped = 0
        with self._lock:
            writes = []
            for doc in docs:
                namespaced = f"{client_id}/{doc['id']}"
                existing = self.store.get(namespaced)
                if (existing is not None and existing.kind == doc["kind"]
                        and existing.body == doc["body"]
                        and existing.deleted == doc.get("deleted", False)):
                    skipped += 1
                    continue
                writes.append(dict(id=namespaced, kind=doc["kind"], body=doc["body"],
                                   deleted=doc.get("deleted", False)))
            if writes:
                self.store.put_many(writes)
            stored = len(writes)
        return json_response({"ack_seq": body.get("to_seq", 0),
                              "stored": stored, "skipped": skipped})

    def changes(self, request: Request):
        _require_version(request)
        try:
            since = int(request.query.get("since", "0"))
            limit = int(request.query.get("limit", str(BATCH_SIZE)))
        except ValueError as exc:
            raise HttpError(400, "bad_request", f"bad integer parameter: {exc}") from exc
        kinds = None
        raw_filter = request.query.get("filter", "")
        if raw_filter and raw_filter != "all":
            kinds = tuple(k for k in raw_filter.split(",") if k)
        exclude = request.query.get("exclude")
        prefix = f"{exclude}/" if exclude else None

        selected = []
        scanned_to = since
        for entry in self.store.changes_since(since, kinds=kinds):
            scanned_to = entry.seq
            if prefix and entry.id.startswith(prefix):
                continue
            doc = self.store.get(entry.id)
            selected.append({
                "seq": entry.seq, "id": entry.id, "kind": entry.kind,
                "doc": {"revision": doc.revision, "body": doc.body,
                        "deleted": doc.deleted},
            })
            if len(selected) >= limit:
                break
        return json_response({"changes": selected, "next_since": scanned_to,
                              "last_seq": self.store.last_seq})

    def checkpoint(self, request: Request):
        _require_version(request)
        body = request.json()
        client_id = _require(body, "client_id", str)
        direction = _require(body, "direction", str)
        seq = _require(body, "seq", int)
        if direction not in ("push", "pull"):
            raise HttpError(400, "bad_request", "direction must be push or pull")
        with self._lock:
            state = self._peers.setdefault(client_id, {"push": 0, "pull": 0})
            state[direction] = max(state[direction], seq)  # never decreases
            _save_json_atomic(self._peers_path, self._peers)
        return json_response({"ok": True, "seq": state[direction]})

    def peer_checkpoint(self, client_id: str, direction: str) -> ReplicationCheckpoint:
        state = self._peers.get(client_id, {"push": 0, "pull": 0})
        return ReplicationCheckpoint(client_id, direction, state[direction])


def _require_version(request: Request) -> None:
    value = request.headers.get(VERSION_HEADER.lower())
    if value != str(PROTOCOL_VERSION):
        raise HttpError(400, "protocol_version_mismatch",
                        f"{VERSION_HEADER} must be {PROTOCOL_VERSION}, got {value!r}")


def _require(body: dict, key: str, kind: type):
    value = body.get(key)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise HttpError(400, "bad_request", f"{key!r} must be {kind.__name__}")
    return value


def serve(store: DocumentStore, host: str = "127.0.0.1", port: int = 0,
          token: str | None = None) -> ServerHandle:
    """Run the replication endpoint; raises BindFailure if the port is taken."""
    server = ReplicationServer(store)
    return serve_app(server.build_app(token=token), host, port)
