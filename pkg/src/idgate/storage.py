"""Record store backing users, roles, assignments, privileges, and bindings.

The default implementation keeps one append-only log file per record kind
under a single directory, one JSON record per line.  Everything is loaded
into memory on open, so reads never touch the disk; writes append a line and
update the in-memory view.  A record overwrite appends a new line with a
bumped version, which keeps the files themselves strictly append-only and
means any prefix of a log is a valid store state.

Layout on disk::

    <dir>/<kind>.log   UTF-8, newline-delimited JSON records
    <dir>/LOCK         writer lock; one writer handle per directory

Passing ``directory=None`` gives a purely in-memory store with the same
interface, which is what the test-suite and the nonce/session caches use.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterator

from filelock import FileLock, Timeout

logger = logging.getLogger("idgate.storage")

RECORD_KINDS = (
    "users",
    "roles",
    "assignments",
    "privileges",
    "bindings",
    "associations",
)

# Fraction of stale log lines that triggers a compaction on open.
COMPACT_DEAD_RATIO = 0.5


class StoreError(Exception):
    """Base error for store operations."""


class UnknownKindError(StoreError):
    pass


class StoreLockedError(StoreError):
    pass


class StoreNotWritableError(StoreError):
    pass


@dataclass(frozen=True)
class StoreRecord:
    kind: str
    key: str
    payload: dict
    version: int


def canonical_json(payload: dict) -> str:
    """Serialize a payload so equal payloads always produce equal bytes."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class Store:
    """Key-value record store with per-kind append-only logs.

    One instance owns the writer lock for its directory; concurrent readers
    should open with ``read_only=True`` or take ``snapshot()`` copies from a
    shared handle.  All operations are individually atomic.
    """

    def __init__(
        self,
        directory: str | Path | None = None,
        *,
        kinds: tuple[str, ...] = RECORD_KINDS,
        read_only: bool = False,
    ) -> None:
        self._kinds = tuple(kinds)
        self._dir = Path(directory) if directory is not None else None
        self._read_only = read_only
        self._lock = threading.RLock()
        self._data: dict[str, dict[str, StoreRecord]] = {k: {} for k in self._kinds}
        self._line_counts: dict[str, int] = {k: 0 for k in self._kinds}
        self._file_lock: FileLock | None = None
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            if not read_only:
                self._file_lock = FileLock(str(self._dir / "LOCK"))
                try:
                    self._file_lock.acquire(timeout=0)
                except Timeout:
                    raise StoreLockedError(
                        f"store directory {self._dir} is locked by another writer"
                    ) from None
            for kind in self._kinds:
                self._load_kind(kind)
                if not read_only:
                    self._maybe_compact(kind)

    # -- loading -----------------------------------------------------------

    def _log_path(self, kind: str) -> Path:
        assert self._dir is not None
        return self._dir / f"{kind}.log"

    def _load_kind(self, kind: str) -> None:
        path = self._log_path(kind)
        if not path.exists():
            return
        raw = path.read_bytes()
        records = self._data[kind]
        pos = 0
        count = 0
        while pos < len(raw):
            nl = raw.find(b"\n", pos)
            if nl == -1:
                # Partial record without a terminating newline: drop it.
                logger.warning("%s: truncated trailing record dropped", path)
                break
            line = raw[pos:nl]
            if line:
                try:
                    obj = json.loads(line.decode("utf-8"))
                    key = obj["key"]
                    version = int(obj["version"])
                except (ValueError, KeyError, UnicodeDecodeError):
                    logger.warning(
                        "%s: corrupt record at byte %d, log truncated there", path, pos
                    )
                    break
                if obj.get("deleted"):
                    records.pop(key, None)
                else:
                    records[key] = StoreRecord(kind, key, obj["payload"], version)
                count += 1
            pos = nl + 1
        self._line_counts[kind] = count
        if not self._read_only and pos < len(raw):
            with path.open("r+b") as fh:
                fh.truncate(pos)

    def _maybe_compact(self, kind: str) -> None:
        live = len(self._data[kind])
        total = self._line_counts[kind]
        if total > 0 and (total - live) / total > COMPACT_DEAD_RATIO:
            self.compact(kind)

    # -- mutation ----------------------------------------------------------

    def _check_kind(self, kind: str) -> None:
        if kind not in self._data:
            raise UnknownKindError(f"unknown record kind: {kind!r}")

    def _append_line(self, kind: str, obj: dict) -> None:
        if self._dir is None:
            return
        line = canonical_json(obj) + "\n"
        with self._log_path(kind).open("a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
        self._line_counts[kind] += 1

    def put(self, kind: str, key: str, payload: dict) -> StoreRecord:
        self._check_kind(kind)
        if self._read_only:
            raise StoreNotWritableError("store opened read-only")
        with self._lock:
            prev = self._data[kind].get(key)
            version = (prev.version + 1) if prev else 1
            record = StoreRecord(kind, key, dict(payload), version)
            self._append_line(kind, {"key": key, "version": version, "payload": record.payload})
            self._data[kind][key] = record
            return record

    def delete(self, kind: str, key: str) -> bool:
        self._check_kind(kind)
        if self._read_only:
            raise StoreNotWritableError("store opened read-only")
        with self._lock:
            prev = self._data[kind].pop(key, None)
            if prev is None:
                return False
            self._append_line(kind, {"key": key, "version": prev.version + 1, "deleted": True})
            return True

    # -- reads -------------------------------------------------------------

    def get(self, kind: str, key: str) -> StoreRecord | None:
        self._check_kind(kind)
        with self._lock:
            return self._data[kind].get(key)

    def scan(self, kind: str) -> list[StoreRecord]:
        """All live records of a kind, in key order."""
        self._check_kind(kind)
        with self._lock:
            return [self._data[kind][k] for k in sorted(self._data[kind])]

    def snapshot(self, kind: str) -> dict[str, dict]:
        """Immutable copy of the live payloads of a kind."""
        self._check_kind(kind)
        with self._lock:
            return {k: dict(r.payload) for k, r in self._data[kind].items()}

    def __len__(self) -> int:
        with self._lock:
            return sum(len(v) for v in self._data.values())

    def is_empty(self) -> bool:
        return len(self) == 0

    # -- maintenance -------------------------------------------------------

    def compact(self, kind: str | None = None) -> None:
        """Rewrite log files keeping only the latest version of each record."""
        if self._dir is None:
            return
        if self._read_only:
            raise StoreNotWritableError("store opened read-only")
        kinds = [kind] if kind else list(self._kinds)
        with self._lock:
            for k in kinds:
                self._check_kind(k)
                path = self._log_path(k)
                tmp = path.with_suffix(".log.tmp")
                with tmp.open("w", encoding="utf-8") as fh:
                    for key in sorted(self._data[k]):
                        rec = self._data[k][key]
                        fh.write(
                            canonical_json(
                                {"key": key, "version": rec.version, "payload": rec.payload}
                            )
                            + "\n"
                        )
                tmp.replace(path)
                self._line_counts[k] = len(self._data[k])

    def close(self) -> None:
        if self._file_lock is not None:
            self._file_lock.release()
            self._file_lock = None

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# -- seed fixture ----------------------------------------------------------

SEED_USERS = (
    (1, "root"),
    (2, "dharmendra"),
    (3, "try"),
)

# Role catalog: (id, name).  Single-digit ids are application-wide roles,
# longer ids belong to the application named by their first digit.  The
# default catalog owner is root.
SEED_ROLES = (
    ("0", "Administrator"),
    ("1", "Student"),
    ("2", "Faculty"),
    ("10", "Assistant Registrar (Student Affairs)"),
    ("20", "Assistant Registrar (Academic)"),
    ("30", "Assistant Registrar (RND)"),
    ("40", "Assistant Registrar (TNP)"),
    ("50", "Assistant Registrar (Finance)"),
    ("3", "Registrar"),
    ("4", "Director"),
    ("5", "Head of Departments"),
)

SEED_ASSIGNMENTS = (
    (1, 1, "12", "2008-01-01", "2009-01-02"),
    (2, 1, "13", "2008-01-01", "2008-05-06"),
    (3, 2, "12", "2007-01-01", "2008-01-01"),
)


def assignment_key(s_no: int) -> str:
    return f"{s_no:08d}"


def user_key(user_id: int) -> str:
    return f"{user_id:08d}"


def load_seed_fixture(store: Store) -> None:
    """Populate an empty store with the demo users, role catalog, and
    assignment log.

    Refuses to touch a non-empty store so a stray ``seed`` cannot clobber
    real data.
    """
    if not store.is_empty():
        raise StoreError("seed fixture requires an empty store")
    for user_id, user_name in SEED_USERS:
        store.put("users", user_key(user_id), {"user_id": user_id, "user_name": user_name})
    for role_id, name in SEED_ROLES:
        store.put("roles", role_id, {"id": role_id, "name": name, "owner": 1})
    for s_no, user_id, role_id, valid_from, valid_upto in SEED_ASSIGNMENTS:
        # Sanity: the fixture dates must parse.
        date.fromisoformat(valid_from), date.fromisoformat(valid_upto)
        store.put(
            "assignments",
            assignment_key(s_no),
            {
                "s_no": s_no,
                "user_id": user_id,
                "role_id": role_id,
                "valid_from": valid_from,
                "valid_upto": valid_upto,
                "assigner": 1,
                "kind": "owner",
                "revoked": False,
            },
        )


def iter_log_lines(path: Path) -> Iterator[str]:
    """Complete lines of a log file; used by inspection tooling and tests."""
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.endswith("\n"):
                yield line[:-1]
