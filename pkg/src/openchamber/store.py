"""Local append-only document store with a changes feed and CSV export.

One JSON record per line on top of a single log file; the first line is a
format header carrying the store version. Every committed write appends a
feed entry (gapless sequence numbers starting at 1) and is fsynced before
``put`` returns, so a crashed process recovers exactly what was acknowledged.

Documents are (id, revision, kind, body, deleted) with integer revisions that
start at 1 and grow by one per local write. Compaction rewrites the log
keeping only the newest body per id; superseded feed entries survive as
body-less marker records so the changes feed stays complete.

Concurrency: single writer, any number of readers. All mutation goes through
one internal lock; reads take a snapshot under the same lock.
"""

from __future__ import annotations

import csv
import errno
import io
import json
import os
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

from .variables import VARIABLES

STORE_FORMAT = "openchamber-store"
STORE_VERSION = 1

KINDS = ("recipe", "datapoint_batch", "run_meta")
STREAMS = ("measured", "desired")

DATAPOINT_BATCH_LIMIT = 1000


class RevisionConflict(Exception):
    """The caller's expected revision is stale."""


class StorageFull(OSError):
    """The underlying filesystem ran out of space."""


class UnknownRun(KeyError):
    """No run metadata stored under that run id."""


class CorruptStore(ValueError):
    """The store file failed header or record validation."""


@dataclass(frozen=True, slots=True)
class DataPoint:
    """One timestamped telemetry record.

    ``value`` is None when a reading was invalid (sensor warm-up) or no
    setpoint was active for the variable; such points still count toward the
    one-point-per-variable-per-stream-per-tick bookkeeping.
    """

    timestamp: int
    variable: str
    value: float | None
    stream: str
    run_id: str = ""

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ValueError(f"unregistered variable {self.variable!r}")
        if self.stream not in STREAMS:
            raise ValueError(f"stream must be one of {STREAMS}")


@dataclass(frozen=True, slots=True)
class Document:
    id: str
    revision: int
    kind: str
    body: dict
    deleted: bool = False


@dataclass(frozen=True, slots=True)
class ChangeEntry:
    seq: int
    id: str
    revision: int
    kind: str
    origin: str = "local"  # "local" or "pull" (applied by replication)


class DocumentStore:
    """Append-only single-file document store."""

    def __init__(self, path: str):
        self.path = os.fspath(path)
        self._lock = threading.RLock()
        self._docs: dict[str, Document] = {}
        self._feed: list[ChangeEntry] = []
        self._load()
        self._file = open(self.path, "ab")

    # -- loading ---------------------------------------------------------

    def _load(self) -> None:
        if not os.path.exists(self.path):
            with open(self.path, "wb") as f:
                header = {"format": STORE_FORMAT, "version": STORE_VERSION}
                f.write(json.dumps(header).encode() + b"\n")
                f.flush()
                os.fsync(f.fileno())
            return
        with open(self.path, "rb") as f:
            lines = f.read().splitlines()
        if not lines:
            raise CorruptStore(f"{self.path}: missing header")
        header = json.loads(lines[0])
        if header.get("format") != STORE_FORMAT or header.get("version") != STORE_VERSION:
            raise CorruptStore(f"{self.path}: unsupported store header {header}")
        for raw in lines[1:]:
            if not raw.strip():
                continue
            rec = json.loads(raw)
            entry = ChangeEntry(rec["seq"], rec["id"], rec["rev"], rec["kind"],
                                rec.get("origin", "local"))
            if entry.seq != len(self._feed) + 1:
                raise CorruptStore(f"{self.path}: sequence gap at {entry.seq}")
            self._feed.append(entry)
            if not rec.get("mark"):
                self._docs[entry.id] = Document(entry.id, entry.revision, entry.kind,
                                                rec["body"], rec.get("deleted", False))

    # -- writes ----------------------------------------------------------

    def put(self, doc_id: str, kind: str, body: dict, *, deleted: bool = False,
            expected_rev: int | None = None, origin: str = "local") -> int:
        """Persist a document revision; durable before return."""
        return self.put_many([dict(id=doc_id, kind=kind, body=body, deleted=deleted,
                                   expected_rev=expected_rev, origin=origin)])[0]

    def put_many(self, writes: Sequence[dict]) -> list[int]:
        """Apply several writes with a single fsync; all-or-nothing validation."""
        with self._lock:
            staged = []
            revisions: dict[str, int] = {}
            for w in writes:
                doc_id, kind = w["id"], w["kind"]
                if not doc_id:
                    raise ValueError("document id must be non-empty")
                if kind not in KINDS:
                    raise ValueError(f"unknown document kind {kind!r}")
                if doc_id in revisions:
                    current = revisions[doc_id]
                else:
                    existing = self._docs.get(doc_id)
                    current = existing.revision if existing else 0
                expected = w.get("expected_rev")
                if expected is not None and expected != current:
                    raise RevisionConflict(
                        f"{doc_id}: expected revision {expected}, current is {current}")
                revisions[doc_id] = current + 1
                staged.append((doc_id, current + 1, kind, w["body"],
                               bool(w.get("deleted", False)), w.get("origin", "local")))

            payload = bytearray()
            seq = len(self._feed)
            records = []
            for doc_id, rev, kind, body, deleted, origin in staged:
                seq += 1
                rec = {"seq": seq, "id": doc_id, "rev": rev, "kind": kind,
                       "deleted": deleted, "origin": origin, "body": body}
                payload += json.dumps(rec, ensure_ascii=False).encode("utf-8") + b"\n"
                records.append(rec)
            self._append(bytes(payload))

            out = []
            for rec in records:
                entry = ChangeEntry(rec["seq"], rec["id"], rec["rev"], rec["kind"],
                                    rec["origin"])
                self._feed.append(entry)
                self._docs[rec["id"]] = Document(rec["id"], rec["rev"], rec["kind"],
                                                 rec["body"], rec["deleted"])
                out.append(rec["rev"])
            return out

    def _append(self, payload: bytes) -> None:
        try:
            self._file.write(payload)
            self._file.flush()
            os.fsync(self._file.fileno())
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise StorageFull(str(exc)) from exc
            raise

    # -- reads -----------------------------------------------------------

    def get(self, doc_id: str) -> Document | None:
        with self._lock:
            return self._docs.get(doc_id)

    @property
    def last_seq(self) -> int:
        with self._lock:
            return len(self._feed)

    def changes_since(self, seq: int, kinds: Iterable[str] | None = None,
                      limit: int | None = None,
                      origins: Iterable[str] | None = None) -> list[ChangeEntry]:
        """Feed entries with sequence > seq, oldest first.

        ``kinds`` restricts to a kind set (None = all); ``origins`` optionally
        restricts by write origin (used by replication to skip pulled docs).
        """
        if seq < 0:
            raise ValueError("seq must be >= 0")
        kind_set = None if kinds is None else set(kinds)
        origin_set = None if origins is None else set(origins)
        with self._lock:
            tail = self._feed[seq:]
        out = []
        for entry in tail:
            if kind_set is not None and entry.kind not in kind_set:
                continue
            if origin_set is not None and entry.origin not in origin_set:
                continue
            out.append(entry)
            if limit is not None and len(out) >= limit:
                break
        return out

    def documents(self, kinds: Iterable[str] | None = None,
                  include_deleted: bool = False) -> list[Document]:
        kind_set = None if kinds is None else set(kinds)
        with self._lock:
            docs = list(self._docs.values())
        return [d for d in docs
                if (kind_set is None or d.kind in kind_set)
                and (include_deleted or not d.deleted)]

    # -- maintenance -----------------------------------------------------

    def compact(self) -> None:
        """Rewrite the log dropping superseded bodies (feed entries survive)."""
        with self._lock:
            tmp = self.path + ".compact"
            with open(tmp, "wb") as f:
                header = {"format": STORE_FORMAT, "version": STORE_VERSION}
                f.write(json.dumps(header).encode() + b"\n")
                for entry in self._feed:
                    doc = self._docs[entry.id]
                    rec = {"seq": entry.seq, "id": entry.id, "rev": entry.revision,
                           "kind": entry.kind, "origin": entry.origin}
                    if doc.revision == entry.revision:
                        rec["deleted"] = doc.deleted
                        rec["body"] = doc.body
                    else:
                        rec["mark"] = True
                    f.write(json.dumps(rec, ensure_ascii=False).encode("utf-8") + b"\n")
                f.flush()
                os.fsync(f.fileno())
            self._file.close()
            os.replace(tmp, self.path)
            self._file = open(self.path, "ab")

    def close(self) -> None:
        with self._lock:
            if not self._file.closed:
                self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- telemetry batching ----------------------------------------------------


class RunWriter:
    """Accumulates a run's DataPoints into datapoint_batch documents.

    Batches hold at most DATAPOINT_BATCH_LIMIT points and never split a tick.
    """

    def __init__(self, store: DocumentStore, run_id: str,
                 batch_limit: int = DATAPOINT_BATCH_LIMIT):
        self.store = store
        self.run_id = run_id
        self.batch_limit = batch_limit
        self._buffer: list[DataPoint] = []
        self._batch_index = 0

    def add_tick(self, points: Sequence[DataPoint]) -> None:
        if self._buffer and len(self._buffer) + len(points) > self.batch_limit:
            self.flush()
        self._buffer.extend(points)

    def flush(self) -> None:
        if not self._buffer:
            return
        body = {
            "run_id": self.run_id,
            "points": [[p.timestamp, p.variable, p.value, p.stream] for p in self._buffer],
        }
        self.store.put(f"{self.run_id}/points/{self._batch_index:06d}",
                       "datapoint_batch", body)
        self._batch_index += 1
        self._buffer = []

    def close(self) -> None:
        self.flush()


def iter_run_points(store: DocumentStore, run_id: str,
                    streams: Iterable[str] | None = None) -> list[DataPoint]:
    """All stored DataPoints of a run, in storage order."""
    if store.get(run_id) is None:
        raise UnknownRun(run_id)
    wanted = set(STREAMS if streams is None else streams)
    points = []
    for doc in store.documents(kinds=("datapoint_batch",)):
        if doc.body.get("run_id") != run_id:
            continue
        for ts, var, value, stream in doc.body["points"]:
            if stream in wanted:
                points.append(DataPoint(ts, var, value, stream, run_id))
    return points


# -- CSV export / import ----------------------------------------------------


def points_to_csv(points: Iterable[DataPoint],
                  streams: Iterable[str] | None = None) -> bytes:
    """Canonical CSV encoding of a point set.

    Header ``timestamp,variable,value,stream``; rows sorted by (timestamp,
    variable, stream); RFC 4180 quoting; LF line endings with exactly one
    trailing newline. None values encode as an empty field. The encoding is
    bit-stable: exporting an imported export reproduces the bytes.
    """
    wanted = set(STREAMS if streams is None else streams)
    rows = sorted(
        ((p.timestamp, p.variable, p.stream, p.value) for p in points if p.stream in wanted),
        key=lambda r: (r[0], r[1], r[2], r[3] is not None, r[3] or 0.0),
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["timestamp", "variable", "value", "stream"])
    for ts, var, stream, value in rows:
        writer.writerow([ts, var, "" if value is None else repr(float(value)), stream])
    return buf.getvalue().encode("utf-8")


def export_csv(store: DocumentStore, run_id: str,
               streams: Iterable[str] | None = None) -> bytes:
    """CSV export of one run's telemetry."""
    return points_to_csv(iter_run_points(store, run_id, streams))


def import_csv(data: bytes, run_id: str = "") -> list[DataPoint]:
    """Parse a CSV export back into DataPoints."""
    text = data.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["timestamp", "variable", "value", "stream"]:
        raise ValueError(f"unexpected CSV header: {header}")
    points = []
    for ts, var, value, stream in reader:
        points.append(DataPoint(int(ts), var, None if value == "" else float(value),
                                stream, run_id))
    return points
