#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any

from .verdict import Verdict, VerdictKind

STORABLE_KINDS = (VerdictKind.CLEAN, VerdictKind.INFECTED)


@dataclass(frozen=True)
class FileFingerprint:
    """Inode metadata observed just before a file was hashed.

    ``ctime_ns`` changes on every content change and cannot be set from user
    space, so an identical fingerprint means the inode was not written since.
    """

    size: int
    mtime_ns: int
    ctime_ns: int
    inode: int

    @classmethod
    def from_stat(cls, st: os.stat_result) -> FileFingerprint:
        return cls(st.st_size, st.st_mtime_ns, st.st_ctime_ns, st.st_ino)

    def as_list(self) -> list[int]:
        return [self.size, self.mtime_ns, self.ctime_ns, self.inode]


@dataclass(frozen=True)
class ScanRecord:
    """What is known about a file from its latest scan.

    Attributes:
        path (str): Canonical absolute path
        digest (str): Hex content digest of the scanned bytes
        sigdb_version (int): Signature database version used for the scan
        scanned_at (float): Seconds since the epoch
        verdict (Verdict): Clean or Infected
        fingerprint (FileFingerprint | None): Inode metadata seen before hashing
        hashed_at_ns (int | None): When hashing started, in epoch nanoseconds
    """

    path: str
    digest: str
    sigdb_version: int
    scanned_at: float
    verdict: Verdict
    fingerprint: FileFingerprint | None = None
    hashed_at_ns: int | None = None

    def __post_init__(self):
        if self.verdict.kind not in STORABLE_KINDS:
            raise ValueError(
                f"Only clean or infected verdicts are stored, got {self.verdict}",
            )
        if self.sigdb_version < 0:
            raise ValueError("sigdb_version must be non-negative")

    def as_dict(self) -> dict[str, Any]:
        data = {
            "path": self.path,
            "digest": self.digest,
            "sigdb_version": self.sigdb_version,
            "scanned_at": self.scanned_at,
            "verdict": self.verdict.as_dict(),
        }
        if self.fingerprint is not None:
            data["fingerprint"] = self.fingerprint.as_list()
            data["hashed_at_ns"] = self.hashed_at_ns
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScanRecord:
        fingerprint = data.get("fingerprint")
        return cls(
            path=data["path"],
            digest=data["digest"],
            sigdb_version=int(data["sigdb_version"]),
            scanned_at=float(data["scanned_at"]),
            verdict=Verdict.from_dict(data["verdict"]),
            fingerprint=FileFingerprint(*fingerprint) if fingerprint else None,
            hashed_at_ns=data.get("hashed_at_ns"),
        )
