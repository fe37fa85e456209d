#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import logging
import os
import re
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import BinaryIO

from scanshear.parameters import StateParameters

from .record import ScanRecord
from .recordlog import encode_frame, read_frame, scan_file
from .verdict import Verdict

log = logging.getLogger(__name__)

FORMAT_TAG = "SCANSTATE 1"
HEADER_NAME = "HEADER"
LOG_NAME = "LOG"
SNAP_PREFIX = "SNAP."
_SNAP_SEQ = re.compile(r"[0-9]+", re.ASCII)


class StateStoreError(OSError):
    """Raised when the state store cannot be read or written."""


class RescanReason(Enum):
    """Why a file must be scanned again.

    "NO_RECORD" : The file was never scanned, or its record was purged
    "CONTENT_CHANGED" : The content digest differs from the stored one
    "SIGDB_UPDATED" : The stored verdict was made with another signature version
    "STORE_UNAVAILABLE" : The store could not be consulted; scanning is the safe side
    """

    NO_RECORD = "no-record"
    CONTENT_CHANGED = "content-changed"
    SIGDB_UPDATED = "sigdb-updated"
    STORE_UNAVAILABLE = "store-unavailable"


@dataclass(frozen=True)
class SkipDecision:
    """Result of ``should_skip``.

    Attributes:
        skip (bool): Whether the stored verdict may be reused
        verdict (Verdict | None): The stored verdict, when skipping
        reason (RescanReason | None): Why a rescan is needed, when not skipping
    """

    skip: bool
    verdict: Verdict | None = None
    reason: RescanReason | None = None

    @classmethod
    def reuse(cls, verdict: Verdict) -> SkipDecision:
        return cls(True, verdict=verdict)

    @classmethod
    def rescan(cls, reason: RescanReason) -> SkipDecision:
        return cls(False, reason=reason)


@dataclass(frozen=True)
class _Location:
    file: str
    offset: int


class StateStore:
    """Prior scan results, persisted as an append-only log with snapshots.

    Two tiers answer lookups. The persistent tier is the on-disk ``LOG`` and
    latest ``SNAP.<n>``, addressed through an in-memory index of record offsets.
    The warm tier is a bounded in-memory cache of decoded records, filled on
    write and on lookup. Writes go through both tiers, so they never disagree.

    Directory layout::

        HEADER    format tag and digest algorithm
        LOG       records appended since the last snapshot
        SNAP.<n>  records sorted by path, written by compaction

    Args:
        state_dir (str | os.PathLike): Store directory, created if missing
        params (StateParameters, optional): Store parameters
    """

    def __init__(self, state_dir: str | os.PathLike, params: StateParameters | None = None):
        self.params = params or StateParameters()
        self.state_dir = Path(state_dir)
        self.warm_hits = 0
        self.persistent_reads = 0

        self._lock = threading.RLock()
        self._cache: OrderedDict[str, ScanRecord] = OrderedDict()
        self._index: dict[str, _Location] = {}
        # Unbuffered, since compaction rewrites the log under them
        self._readers: dict[str, BinaryIO] = {}
        self._log: BinaryIO | None = None
        self._log_records = 0
        self._snapshot_seq = 0
        try:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            self.digest_algorithm = self._open_header()
            self._load()
        except OSError as e:
            self.close()
            raise StateStoreError(f"Cannot open state store {self.state_dir}: {e}") from e

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    def __len__(self) -> int:
        with self._lock:
            return len(self._index)

    def __contains__(self, path: str) -> bool:
        with self._lock:
            return str(path) in self._index

    def persistent_lookup(self, path: str | os.PathLike) -> ScanRecord | None:
        """Read the latest record for ``path`` from disk, bypassing the warm tier."""
        with self._lock:
            location = self._index.get(str(path))
            if location is None:
                return None
            self.persistent_reads += 1
            return self._read(location)

    def warm_lookup(self, path: str | os.PathLike) -> ScanRecord | None:
        """Return the latest record for ``path``, from memory when possible.

        Args:
            path (str | os.PathLike): Canonical path

        Returns:
            ScanRecord | None: Same result as ``persistent_lookup``
        """
        path = str(path)
        with self._lock:
            record = self._cache.get(path)
            if record is not None:
                self._cache.move_to_end(path)
                self.warm_hits += 1
                return record
            record = self.persistent_lookup(path)
            if record is not None:
                self._remember(record)
            return record

    def should_skip(
        self,
        path: str | os.PathLike,
        current_digest: str,
        current_sigdb_version: int,
    ) -> SkipDecision:
        """Decide whether the stored verdict for ``path`` can be reused.

        Skipping requires a record with the same content digest and exactly the
        same signature database version. Store failures never lead to a skip.

        Args:
            path (str | os.PathLike): Canonical path
            current_digest (str): Digest of the file's present content
            current_sigdb_version (int): Version of the signatures in use

        Returns:
            SkipDecision: Skip with the cached verdict, or rescan with a reason
        """
        try:
            record = self.warm_lookup(path)
        except OSError as e:
            log.warning("State store lookup failed for %s, rescanning: %s", path, e)
            return SkipDecision.rescan(RescanReason.STORE_UNAVAILABLE)
        if record is None:
            return SkipDecision.rescan(RescanReason.NO_RECORD)
        if record.digest != current_digest:
            return SkipDecision.rescan(RescanReason.CONTENT_CHANGED)
        if record.sigdb_version != current_sigdb_version:
            return SkipDecision.rescan(RescanReason.SIGDB_UPDATED)
        return SkipDecision.reuse(record.verdict)

    def records(self) -> list[ScanRecord]:
        """All current records, sorted by path."""
        with self._lock:
            return [self._read(self._index[path]) for path in sorted(self._index)]

    # ------------------------------------------------------------------
    # Updates
    # ------------------------------------------------------------------

    def record_result(self, record: ScanRecord) -> None:
        """Durably store ``record``, superseding any earlier record for its path.

        Args:
            record (ScanRecord): Clean or infected scan result

        Raises:
            StateStoreError: Raised if the record could not be written. The store
                keeps its previous contents.
        """
        with self._lock:
            offset = self._append({"op": "put", "record": record.as_dict()})
            self._index[record.path] = _Location(LOG_NAME, offset)
            self._remember(record)
            if self._log_records >= self.params.compact_every:
                try:
                    self.compact()
                except OSError as e:
                    log.warning("Compaction of %s failed, will retry: %s", self.state_dir, e)

    def purge(self, path_prefix: str | os.PathLike | None = None) -> int:
        """Forget records, all of them or those at or below ``path_prefix``.

        Returns:
            int: Number of records removed
        """
        with self._lock:
            if path_prefix is None:
                count = len(self._index)
                self._append({"op": "clear"})
                self._index.clear()
                self._cache.clear()
                return count

            prefix = str(path_prefix).rstrip(os.sep)
            doomed = [
                p for p in self._index if p == prefix or p.startswith(prefix + os.sep)
            ]
            for path in doomed:
                self._append({"op": "del", "path": path})
                del self._index[path]
                self._cache.pop(path, None)
            return len(doomed)

    def compact(self) -> None:
        """Write all current records to a new snapshot and empty the log."""
        with self._lock:
            seq = self._snapshot_seq + 1
            name = f"{SNAP_PREFIX}{seq}"
            final = self.state_dir / name
            tmp = self.state_dir / f"{name}.tmp"
            index = {}
            with open(tmp, "wb") as out:
                for path in sorted(self._index):
                    record = self._read(self._index[path])
                    index[path] = _Location(name, out.tell())
                    out.write(encode_frame({"op": "put", "record": record.as_dict()}))
                out.flush()
                os.fsync(out.fileno())
            os.replace(tmp, final)
            _fsync_dir(self.state_dir)

            # A crash from here on replays the old log over the new snapshot,
            # which yields the same records
            self._log.truncate(0)
            self._log.flush()
            os.fsync(self._log.fileno())
            self._readers[LOG_NAME].seek(0)

            old = f"{SNAP_PREFIX}{self._snapshot_seq}"
            if old in self._readers:
                self._readers.pop(old).close()
                (self.state_dir / old).unlink(missing_ok=True)
            self._readers[name] = open(final, "rb", buffering=0)
            self._index = index
            self._snapshot_seq = seq
            self._log_records = 0
            log.info("Compacted %s into %s (%d records)", self.state_dir, name, len(index))

    def close(self) -> None:
        with self._lock:
            for reader in self._readers.values():
                reader.close()
            self._readers.clear()
            if self._log is not None:
                self._log.close()
                self._log = None

    def __enter__(self) -> StateStore:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    def _open_header(self) -> str:
        header = self.state_dir / HEADER_NAME
        wanted = self.params.digest_algorithm
        if not header.exists():
            header.write_text(f"{FORMAT_TAG}\nDIGEST {wanted}\n", encoding="utf-8")
            return wanted

        lines = header.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != FORMAT_TAG:
            raise StateStoreError(f"{header} is not a {FORMAT_TAG} header")
        algorithm = None
        for line in lines[1:]:
            key, _, value = line.partition(" ")
            if key == "DIGEST":
                algorithm = value.strip()
        if not algorithm:
            raise StateStoreError(f"{header} does not name a digest algorithm")
        if algorithm != wanted:
            warnings.warn(
                f"State store {self.state_dir} uses {algorithm} digests; "
                f"ignoring configured {wanted}",
                stacklevel=3,
            )
        return algorithm

    def _load(self) -> None:
        for leftover in self.state_dir.glob(f"{SNAP_PREFIX}*.tmp"):
            leftover.unlink()

        snapshots = sorted(
            (int(p.name[len(SNAP_PREFIX) :]), p)
            for p in self.state_dir.glob(f"{SNAP_PREFIX}*")
            if _SNAP_SEQ.fullmatch(p.name[len(SNAP_PREFIX) :])
        )
        if snapshots:
            self._snapshot_seq, snap_path = snapshots[-1]
            frames, end = scan_file(snap_path)
            if end != snap_path.stat().st_size:
                log.warning("Snapshot %s is damaged after offset %d", snap_path, end)
            for frame in frames:
                self._apply(frame.entry, snap_path.name, frame.offset)
            self._readers[snap_path.name] = open(snap_path, "rb", buffering=0)
            for _, stale in snapshots[:-1]:
                stale.unlink()

        log_path = self.state_dir / LOG_NAME
        frames, end = scan_file(log_path)
        for frame in frames:
            self._apply(frame.entry, LOG_NAME, frame.offset)
        self._log_records = len(frames)
        if log_path.exists() and log_path.stat().st_size > end:
            log.warning(
                "Truncating torn tail of %s at offset %d (%d bytes)",
                log_path,
                end,
                log_path.stat().st_size - end,
            )
            with open(log_path, "r+b") as fh:
                fh.truncate(end)

        self._log = open(log_path, "ab")
        self._readers[LOG_NAME] = open(log_path, "rb", buffering=0)
        log.info(
            "Opened state store %s: %d records (%d in log, snapshot %d)",
            self.state_dir,
            len(self._index),
            self._log_records,
            self._snapshot_seq,
        )

    def _apply(self, entry: dict, file: str, offset: int) -> None:
        op = entry.get("op")
        if op == "put":
            self._index[entry["record"]["path"]] = _Location(file, offset)
        elif op == "del":
            self._index.pop(entry["path"], None)
        elif op == "clear":
            self._index.clear()
        else:
            raise StateStoreError(f"Unknown state log operation: {op}")

    def _append(self, entry: dict) -> int:
        frame = encode_frame(entry)
        # Compaction truncates the log without moving the stream position
        offset = self._log.seek(0, os.SEEK_END)
        try:
            self._log.write(frame)
            self._log.flush()
            if self.params.fsync:
                os.fsync(self._log.fileno())
        except OSError as e:
            try:
                self._log.truncate(offset)
            except OSError:
                log.exception("Could not roll back partial append to %s", self.state_dir)
            raise StateStoreError(f"Cannot append to state log: {e}") from e
        self._log_records += 1
        return offset

    def _read(self, location: _Location) -> ScanRecord:
        frame = read_frame(self._readers[location.file], location.offset)
        if frame is None:
            raise StateStoreError(
                f"Damaged record in {location.file} at offset {location.offset}",
            )
        return ScanRecord.from_dict(frame.entry["record"])

    def _remember(self, record: ScanRecord) -> None:
        self._cache[record.path] = record
        self._cache.move_to_end(record.path)
        while len(self._cache) > self.params.cache_size:
            self._cache.popitem(last=False)


def _fsync_dir(path: Path) -> None:
    if os.name != "posix":
        return
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)
