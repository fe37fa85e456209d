#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import dataclasses
import json
import os
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

from scanshear.planner import ScanReport

# Wall times are clamped to this before dividing
MIN_SECONDS = 1e-9

COLUMNS = (
    ("label", "<", 20),
    ("policy", "<", 7),
    ("files_scanned", ">", 13),
    ("files_skipped", ">", 13),
    ("bytes_read", ">", 14),
    ("wall_seconds", ">", 12),
    ("predicted_seconds", ">", 17),
    ("speedup", ">", 9),
    ("bytes_ratio", ">", 11),
)


@dataclass(frozen=True)
class BenchRow:
    """One measured run."""

    label: str
    policy: str
    files_scanned: int
    files_skipped: int
    bytes_read: int
    wall_seconds: float
    predicted_seconds: float

    @classmethod
    def from_scan_report(
        cls,
        label: str,
        report: ScanReport,
        predicted_seconds: float,
        wall_seconds: float | None = None,
    ) -> BenchRow:
        return cls(
            label,
            report.policy.name.lower(),
            report.files_scanned,
            report.files_skipped,
            report.bytes_read,
            report.wall_seconds if wall_seconds is None else wall_seconds,
            predicted_seconds,
        )


@dataclass
class BenchReport:
    """Runs compared against the first one.

    Attributes:
        rows (list[BenchRow]): Runs, the first being the baseline
        workers (int): Concurrent files used by the runs
        speedups (list[float]): Baseline wall time over each row's wall time
        bytes_ratios (list[float]): Each row's bytes read over the baseline's
    """

    rows: list[BenchRow]
    workers: int = 1
    speedups: list[float] = field(init=False)
    bytes_ratios: list[float] = field(init=False)

    def __post_init__(self):
        if not self.rows:
            raise ValueError("A bench report needs at least one row")
        first = self.rows[0]
        self.speedups = [speedup(first, row) for row in self.rows]
        self.bytes_ratios = [
            row.bytes_read / first.bytes_read if first.bytes_read else 0.0 for row in self.rows
        ]

    def speedup_of(self, label: str) -> float:
        for row, value in zip(self.rows, self.speedups, strict=True):
            if row.label == label:
                return value
        raise KeyError(label)

    def as_dict(self) -> dict[str, Any]:
        return {
            "workers": self.workers,
            "rows": [dataclasses.asdict(row) for row in self.rows],
            "comparisons": [
                {
                    "label": row.label,
                    "baseline": self.rows[0].label,
                    "speedup": s,
                    "bytes_ratio": b,
                }
                for row, s, b in zip(self.rows, self.speedups, self.bytes_ratios, strict=True)
            ],
        }

    def to_json(self, path: str | os.PathLike | None = None) -> str:
        text = json.dumps(self.as_dict(), indent=2) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def format_table(self) -> str:
        """Fixed-width table, one line per row."""
        header = " ".join(f"{name:{align}{width}}" for name, align, width in COLUMNS)
        lines = [header, "-" * len(header)]
        for row, s, b in zip(self.rows, self.speedups, self.bytes_ratios, strict=True):
            values = {
                **dataclasses.asdict(row),
                "wall_seconds": f"{row.wall_seconds:.4f}",
                "predicted_seconds": f"{row.predicted_seconds:.4f}",
                "speedup": f"{s:.2f}x",
                "bytes_ratio": f"{b:.4f}",
            }
            lines.append(
                " ".join(f"{values[name]!s:{align}{width}}" for name, align, width in COLUMNS),
            )
        return "\n".join(lines) + "\n"


def speedup(a: BenchRow, b: BenchRow) -> float:
    """``wall(a) / wall(b)``: how many times faster ``b`` ran than ``a``."""
    return max(a.wall_seconds, MIN_SECONDS) / max(b.wall_seconds, MIN_SECONDS)


def compare_runs(rows: Sequence[BenchRow], workers: int = 1) -> BenchReport:
    """Compare runs against the first one.

    Args:
        rows (Sequence[BenchRow]): Runs, baseline first
        workers (int, optional): Concurrent files used by the runs

    Returns:
        BenchReport: Rows with speedups and byte ratios
    """
    return BenchReport(list(rows), workers)
