#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum

from .base_parameters import BaseParameters

DEFAULT_SKIP_TYPES = (".txt", ".md", ".log", ".csv")

MiB = 1024 * 1024
GiB = 1024 * MiB


class ScanPolicy(IntEnum):
    """Which files a scan plan covers.

    "FULL" : Every regular file is signature scanned, except archived containers
        and file types that cannot carry an infection
    "SMART" : As FULL, but files whose content digest and signature database
        version match a stored record are skipped and report their cached verdict
    "BOOT" : Only the critical set is covered; baselined files are integrity
        checked and only escalated to a signature scan when modified
    """

    FULL = 1
    SMART = 2
    BOOT = 3


@dataclass(repr=False)
class PathParameters(BaseParameters):
    """Filesystem locations used by a run.

    Attributes:
        sigdb (str): Signature database in VDB format
        state_dir (str): Directory holding the scan state store
        root (str): Directory to scan
        critical (str): Critical manifest, required by the boot policy
        baseline (str): Integrity baseline file
        quarantine_dir (str): Where infected archived containers are moved.
            Defaults to ``quarantine/`` beside the scan root.
        json_out (str): If set, reports are also written here as JSON
    """

    sigdb: str | None = None
    state_dir: str | None = None
    root: str | None = None
    critical: str | None = None
    baseline: str | None = None
    quarantine_dir: str | None = None
    json_out: str | None = None


@dataclass(repr=False)
class ScanParameters(BaseParameters):
    """Parameters controlling how a plan is built and executed.

    Attributes:
        policy (ScanPolicy): Which scan policy to use
        skip_types (list[str]): File extensions that are never signature scanned
        workers (int): Number of files scanned concurrently. 0 uses the number of
            logical CPUs.
        quick_mode (bool): Report quick-pattern hits without exact verification.
            Faster but may report false positives.
        chunk_size (int): Window size in bytes for streaming large objects
    """

    policy: ScanPolicy = ScanPolicy.FULL
    skip_types: list[str] = field(default_factory=lambda: list(DEFAULT_SKIP_TYPES))
    workers: int = 0
    quick_mode: bool = False
    chunk_size: int = MiB

    def validate(self) -> None:
        super().validate()
        if self.workers < 0:
            raise ValueError(f"scan.workers must be >= 0, got {self.workers}")
        if self.chunk_size <= 0:
            raise ValueError(f"scan.chunk_size must be positive, got {self.chunk_size}")
        self.skip_types = [_normalize_extension(ext) for ext in self.skip_types]


@dataclass(repr=False)
class BudgetParameters(BaseParameters):
    """Resource limits for expanding containers (the scan budget).

    Attributes:
        max_depth (int): Deepest nesting level whose members are scanned
        max_expanded_bytes (int): Total bytes that may be expanded per object
        max_entries (int): Total container members that may be visited per object
        max_ratio (int): Largest tolerated expanded:compressed ratio of a member
        max_member_in_memory (int): Members larger than this are spilled to a
            temporary directory instead of being held in memory
    """

    max_depth: int = 8
    max_expanded_bytes: int = 256 * MiB
    max_entries: int = 10_000
    max_ratio: int = 1000
    max_member_in_memory: int = 16 * MiB

    def validate(self) -> None:
        super().validate()
        for name in (
            "max_depth",
            "max_expanded_bytes",
            "max_entries",
            "max_ratio",
            "max_member_in_memory",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(
                    f"budget.{name} must be strictly positive, got {getattr(self, name)}",
                )


@dataclass(repr=False)
class StateParameters(BaseParameters):
    """Parameters for the scan state store.

    Attributes:
        digest_algorithm (str): hashlib algorithm for content digests. Fixed per
            store once the store header is written.
        cache_size (int): Number of records held in the in-memory tier
        compact_every (int): Log appends between snapshot compactions
        fsync (bool): Flush every appended record to disk before acknowledging
        racy_window_s (float): A stored digest is only reused without rehashing
            when the file's last change predates hashing by more than this
    """

    digest_algorithm: str = "sha256"
    cache_size: int = 65_536
    compact_every: int = 10_000
    fsync: bool = True
    racy_window_s: float = 0.05

    def validate(self) -> None:
        super().validate()
        if self.digest_algorithm not in hashlib.algorithms_available:
            raise ValueError(f"Unknown digest algorithm: {self.digest_algorithm}")
        if hashlib.new(self.digest_algorithm).digest_size < 32:
            raise ValueError(
                f"state.digest_algorithm must produce at least 256 bits, "
                f"{self.digest_algorithm} does not",
            )
        if self.cache_size <= 0 or self.compact_every <= 0:
            raise ValueError("state.cache_size and state.compact_every must be positive")
        if self.racy_window_s < 0:
            raise ValueError("state.racy_window_s must be >= 0")


@dataclass(repr=False)
class ArchiveParameters(BaseParameters):
    """Parameters for archiving non-recently-used files.

    Attributes:
        nru_threshold_days (float): Files unused for longer than this are archived
    """

    nru_threshold_days: float = 30.0

    def validate(self) -> None:
        super().validate()
        if self.nru_threshold_days < 0:
            raise ValueError("archive.nru_threshold_days must be >= 0")


@dataclass(repr=False)
class BenchParameters(BaseParameters):
    """Parameters for benchmark runs and the reference calibration point.

    The reference point is the scan-time rule of thumb of 30 minutes per 10 GB on
    an average machine; the default cost model rate reproduces it exactly.

    Attributes:
        repeat (int): Number of times each benchmark run is repeated (median kept)
        reference_signatures (int): Signature count at the reference point
        reference_methods (int): Detection stages at the reference point
        reference_bytes (int): Bytes scanned at the reference point
        reference_seconds (float): Scan time at the reference point
    """

    repeat: int = 1
    reference_signatures: int = 90_000
    reference_methods: int = 2
    reference_bytes: int = 10 * GiB
    reference_seconds: float = 1800.0

    def validate(self) -> None:
        super().validate()
        if self.repeat < 1:
            raise ValueError("bench.repeat must be >= 1")
        if self.reference_seconds <= 0:
            raise ValueError("bench.reference_seconds must be positive")


@dataclass(repr=False)
class ScanShearParameters(BaseParameters):
    """Parameters for ScanShear.

    Attributes:
        paths (PathParameters): Filesystem locations
        scan (ScanParameters): Plan building and execution
        budget (BudgetParameters): Container expansion limits
        state (StateParameters): Scan state store
        archive (ArchiveParameters): Non-recently-used archival
        bench (BenchParameters): Benchmarks and cost model calibration
    """

    paths: PathParameters = None
    scan: ScanParameters = None
    budget: BudgetParameters = None
    state: StateParameters = None
    archive: ArchiveParameters = None
    bench: BenchParameters = None


def _normalize_extension(ext: str) -> str:
    ext = ext.strip().lower()
    return ext if ext.startswith(".") else f".{ext}"
