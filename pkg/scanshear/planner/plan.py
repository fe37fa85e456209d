#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from scanshear.parameters import ScanPolicy
from scanshear.statestore import Verdict

from .baseline import Baseline


class Action(Enum):
    """What happens to a plan target.

    "FULL_SCAN" : Signature scan, expanding containers
    "INTEGRITY_CHECK" : Compare with the baseline digest; a modified file is
        escalated to a full scan
    "SKIP" : Not scanned. The reason is ``type-filter`` or ``cached``; cached
        targets report their stored verdict.
    "EXEMPT" : An archived container, scanned only when restored
    """

    FULL_SCAN = "full-scan"
    INTEGRITY_CHECK = "integrity-check"
    SKIP = "skip"
    EXEMPT = "exempt"


@dataclass(frozen=True)
class Target:
    """One planned file.

    Attributes:
        path (Path): Absolute path
        action (Action): What to do with it
        reason (str | None): Why it is skipped or exempt, or why it is rescanned
        size (int): Size at planning time, 0 if unknown
        critical (bool): Member of the critical set
        cached_verdict (Verdict | None): Stored verdict, for ``skip(cached)``
    """

    path: Path
    action: Action
    reason: str | None = None
    size: int = 0
    critical: bool = False
    cached_verdict: Verdict | None = None

    @property
    def label(self) -> str:
        if self.action in (Action.SKIP, Action.EXEMPT) and self.reason:
            return f"{self.action.value}({self.reason})"
        return self.action.value


@dataclass
class ScanPlan:
    """Ordered scan targets for one run.

    Targets are ordered critical files first, then by descending size, then by
    path.

    Attributes:
        policy (ScanPolicy): Policy the plan was built with
        root (Path): Scanned directory
        targets (list[Target]): Files and their actions
        created_at (float): Seconds since the epoch
        sigdb_version (int): Signature version the plan was built against
        baseline (Baseline | None): Baseline used for integrity checks
        bytes_hashed (int): File bytes read while planning
        plan_seconds (float): Time spent building the plan
        counters (dict[str, int]): State store lookups made while planning
    """

    policy: ScanPolicy
    root: Path
    targets: list[Target]
    created_at: float
    sigdb_version: int
    baseline: Baseline | None = None
    bytes_hashed: int = 0
    plan_seconds: float = 0.0
    counters: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.targets)

    def __iter__(self):
        return iter(self.targets)

    def action_counts(self) -> Counter:
        return Counter(t.label for t in self.targets)

    def with_action(self, action: Action) -> list[Target]:
        return [t for t in self.targets if t.action == action]


def order_targets(targets: list[Target]) -> list[Target]:
    return sorted(targets, key=lambda t: (not t.critical, -t.size, str(t.path)))
