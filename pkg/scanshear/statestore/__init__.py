#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from .fingerprint import DigestCache, FileDigest, digest_bytes, hash_file, is_trusted
from .record import FileFingerprint, ScanRecord
from .store import RescanReason, SkipDecision, StateStore, StateStoreError
from .verdict import Verdict, VerdictKind, combine


def should_skip(store: StateStore, path, current_digest: str, current_sigdb_version: int):
    return store.should_skip(path, current_digest, current_sigdb_version)


def record_result(store: StateStore, record: ScanRecord) -> None:
    store.record_result(record)


def warm_lookup(store: StateStore, path) -> ScanRecord | None:
    return store.warm_lookup(path)
