#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""Content digests, with reuse of stored digests for untouched files."""

from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import dataclass

from .record import FileFingerprint, ScanRecord

log = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 1024 * 1024


@dataclass(frozen=True)
class FileDigest:
    """Digest of a file's content.

    Attributes:
        digest (str): Hex content digest
        fingerprint (FileFingerprint | None): Metadata seen before hashing, or
            ``None`` when the file changed while it was being read
        hashed_at_ns (int): When hashing started, in epoch nanoseconds
        bytes_read (int): Bytes read to produce the digest, 0 when reused
    """

    digest: str
    fingerprint: FileFingerprint | None
    hashed_at_ns: int
    bytes_read: int


def hash_file(
    path: str | os.PathLike,
    algorithm: str = "sha256",
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> FileDigest:
    """Hash a file in chunks.

    Raises:
        OSError: Raised if the file cannot be read
    """
    before = os.stat(path)
    hashed_at_ns = time.time_ns()
    hasher = hashlib.new(algorithm)
    bytes_read = 0
    with open(path, "rb") as fh:
        while chunk := fh.read(chunk_size):
            hasher.update(chunk)
            bytes_read += len(chunk)
    fingerprint = FileFingerprint.from_stat(before)
    if FileFingerprint.from_stat(os.stat(path)) != fingerprint:
        fingerprint = None
    return FileDigest(hasher.hexdigest(), fingerprint, hashed_at_ns, bytes_read)


def digest_bytes(data: bytes, algorithm: str = "sha256") -> str:
    return hashlib.new(algorithm, data).hexdigest()


def is_trusted(record: ScanRecord, current: FileFingerprint, racy_window_ns: int) -> bool:
    """Whether ``record.digest`` still describes a file whose metadata is ``current``.

    The stored fingerprint must match exactly, and the file's last change must
    predate hashing by more than the racy window. A change that lands within the
    same clock tick as hashing would otherwise go unnoticed.
    """
    stored = record.fingerprint
    if stored is None or record.hashed_at_ns is None or stored != current:
        return False
    cutoff = record.hashed_at_ns - racy_window_ns
    return stored.ctime_ns < cutoff and stored.mtime_ns < cutoff


class DigestCache:
    """Produces content digests, reusing a store's digest when provably current.

    Args:
        store (StateStore): Store holding prior records
        racy_window_s (float, optional): See ``StateParameters.racy_window_s``
        chunk_size (int, optional): Read size when hashing
    """

    def __init__(self, store, racy_window_s: float | None = None, chunk_size=DEFAULT_CHUNK_SIZE):
        self.store = store
        if racy_window_s is None:
            racy_window_s = store.params.racy_window_s
        self.racy_window_ns = int(racy_window_s * 1e9)
        self.chunk_size = chunk_size
        self.reused = 0

    def digest(self, path: str | os.PathLike) -> FileDigest:
        """Digest of ``path``'s present content.

        Raises:
            OSError: Raised if the file cannot be read
        """
        current = FileFingerprint.from_stat(os.stat(path))
        try:
            record = self.store.warm_lookup(path)
        except OSError as e:
            log.debug("No stored digest for %s: %s", path, e)
            record = None
        if record is not None and is_trusted(record, current, self.racy_window_ns):
            self.reused += 1
            return FileDigest(record.digest, record.fingerprint, record.hashed_at_ns, 0)
        return hash_file(path, self.store.digest_algorithm, self.chunk_size)
