#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Any

from scanshear.parameters import ScanPolicy
from scanshear.statestore import Verdict, VerdictKind

from .baseline import IntegrityOutcome

EXIT_CLEAN = 0
EXIT_INFECTED = 1
EXIT_UNSCANNABLE = 2


@dataclass(frozen=True)
class FileResult:
    """Outcome for one plan target.

    Attributes:
        path (str): Absolute path
        action (str): Planned action, ex: ``full-scan`` or ``skip(cached)``
        verdict (Verdict): Verdict reported for the file
        bytes_read (int): Bytes read or expanded for this file
        integrity (IntegrityOutcome | None): Result of an integrity check
        scanned (bool): A signature scan ran for this file in this run
    """

    path: str
    action: str
    verdict: Verdict
    bytes_read: int = 0
    integrity: IntegrityOutcome | None = None
    scanned: bool = False

    def as_dict(self) -> dict[str, Any]:
        data = {
            "path": self.path,
            "action": self.action,
            "verdict": str(self.verdict),
            "bytes_read": self.bytes_read,
        }
        if self.integrity is not None:
            data["integrity"] = self.integrity.value
        return data


@dataclass
class ScanReport:
    """Aggregated results of one executed plan.

    Results are kept sorted by path, so the report content does not depend on the
    order in which workers finished.
    """

    policy: ScanPolicy
    root: str
    sigdb_version: int
    results: list[FileResult]
    workers: int = 1
    plan_bytes: int = 0
    plan_seconds: float = 0.0
    scan_seconds: float = 0.0
    counters: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.results = sorted(self.results, key=lambda r: r.path)

    def __len__(self) -> int:
        return len(self.results)

    def of_kind(self, kind: VerdictKind) -> list[FileResult]:
        return [r for r in self.results if r.verdict.kind == kind]

    @property
    def infected(self) -> list[FileResult]:
        return self.of_kind(VerdictKind.INFECTED)

    @property
    def unscannable(self) -> list[FileResult]:
        return self.of_kind(VerdictKind.UNSCANNABLE)

    @property
    def modified(self) -> list[FileResult]:
        """Critical files whose integrity check found them changed."""
        return [r for r in self.results if r.integrity == IntegrityOutcome.MODIFIED]

    @property
    def files_scanned(self) -> int:
        return sum(r.scanned for r in self.results)

    @property
    def files_skipped(self) -> int:
        return sum(r.action.startswith(("skip", "exempt")) for r in self.results)

    @property
    def bytes_read(self) -> int:
        return self.plan_bytes + sum(r.bytes_read for r in self.results)

    @property
    def wall_seconds(self) -> float:
        return self.plan_seconds + self.scan_seconds

    @property
    def exit_code(self) -> int:
        """1 if anything is infected, else 2 if anything is unscannable, else 0."""
        if self.infected:
            return EXIT_INFECTED
        if self.unscannable:
            return EXIT_UNSCANNABLE
        return EXIT_CLEAN

    def verdict_map(self) -> dict[str, Verdict]:
        return {r.path: r.verdict for r in self.results}

    def summary(self) -> dict[str, int]:
        kinds = Counter(r.verdict.kind.name.lower() for r in self.results)
        return {
            "files": len(self.results),
            "clean": kinds["clean"],
            "infected": kinds["infected"],
            "unscannable": kinds["unscannable"],
            "skipped": kinds["skipped"],
            "files_scanned": self.files_scanned,
            "files_skipped": self.files_skipped,
            "bytes_read": self.bytes_read,
        }

    def as_dict(self) -> dict[str, Any]:
        return {
            "policy": self.policy.name.lower(),
            "root": self.root,
            "sigdb_version": self.sigdb_version,
            "workers": self.workers,
            "summary": self.summary(),
            "infected": [r.path for r in self.infected],
            "unscannable": [r.path for r in self.unscannable],
            "modified": [r.path for r in self.modified],
            "files": [r.as_dict() for r in self.results],
            "counters": dict(sorted(self.counters.items())),
            "timing": {
                "plan_seconds": self.plan_seconds,
                "scan_seconds": self.scan_seconds,
                "wall_seconds": self.wall_seconds,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"

    def format_text(self, verbose: bool = False) -> str:
        """Human-readable summary; every file is listed when ``verbose``."""
        s = self.summary()
        lines = [
            f"{self.policy.name.lower()} scan of {self.root} "
            f"(signatures v{self.sigdb_version}, {self.workers} workers)",
            f"  files: {s['files']}  scanned: {s['files_scanned']}  "
            f"skipped: {s['files_skipped']}  bytes read: {s['bytes_read']}",
            f"  clean: {s['clean']}  infected: {s['infected']}  "
            f"unscannable: {s['unscannable']}  not scanned: {s['skipped']}",
        ]
        listed = self.results if verbose else self.infected + self.unscannable + self.modified
        for r in sorted(set(listed), key=lambda r: r.path):
            note = f" [{r.integrity.value}]" if r.integrity else ""
            lines.append(f"  {r.verdict}  {r.path}{note}")
        lines.append(f"  time: {self.wall_seconds:.3f} s")
        return "\n".join(lines) + "\n"
