#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from enum import IntEnum
from typing import Any


class VerdictKind(IntEnum):
    """Outcome of examining one object.

    "CLEAN" : No signature matched
    "INFECTED" : At least one signature matched
    "UNSCANNABLE" : The content could not be inspected (encrypted, corrupt, over
        budget or unreadable). Always surfaced, never treated as clean.
    "SKIPPED" : The object was deliberately not examined in this run
    """

    CLEAN = 1
    INFECTED = 2
    UNSCANNABLE = 3
    SKIPPED = 4


@dataclass(frozen=True)
class Verdict:
    """Tagged verdict. Use the ``clean``/``infected``/``unscannable``/``skipped``
    constructors rather than building one directly.

    Attributes:
        kind (VerdictKind): Which outcome
        signature_ids (tuple[str, ...]): Matching signatures, sorted, for INFECTED
        reason (str | None): Reason token for UNSCANNABLE and SKIPPED
    """

    kind: VerdictKind
    signature_ids: tuple[str, ...] = ()
    reason: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", VerdictKind(self.kind))
        object.__setattr__(self, "signature_ids", tuple(sorted(set(self.signature_ids))))
        if self.kind == VerdictKind.INFECTED and not self.signature_ids:
            raise ValueError("An infected verdict needs at least one signature id")
        if self.kind != VerdictKind.INFECTED and self.signature_ids:
            raise ValueError(f"A {self.kind.name.lower()} verdict carries no signatures")
        if self.kind in (VerdictKind.UNSCANNABLE, VerdictKind.SKIPPED) and not self.reason:
            raise ValueError(f"A {self.kind.name.lower()} verdict needs a reason")

    @classmethod
    def clean(cls) -> Verdict:
        return cls(VerdictKind.CLEAN)

    @classmethod
    def infected(cls, signature_ids: Iterable[str]) -> Verdict:
        return cls(VerdictKind.INFECTED, tuple(signature_ids))

    @classmethod
    def unscannable(cls, reason: str) -> Verdict:
        return cls(VerdictKind.UNSCANNABLE, reason=reason)

    @classmethod
    def skipped(cls, reason: str) -> Verdict:
        return cls(VerdictKind.SKIPPED, reason=reason)

    @property
    def is_clean(self) -> bool:
        return self.kind == VerdictKind.CLEAN

    @property
    def is_infected(self) -> bool:
        return self.kind == VerdictKind.INFECTED

    @property
    def is_unscannable(self) -> bool:
        return self.kind == VerdictKind.UNSCANNABLE

    @property
    def is_skipped(self) -> bool:
        return self.kind == VerdictKind.SKIPPED

    def as_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"kind": self.kind.name.lower()}
        if self.signature_ids:
            data["signature_ids"] = list(self.signature_ids)
        if self.reason is not None:
            data["reason"] = self.reason
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Verdict:
        return cls(
            VerdictKind[data["kind"].upper()],
            tuple(data.get("signature_ids", ())),
            data.get("reason"),
        )

    def __str__(self) -> str:
        name = self.kind.name.capitalize()
        if self.signature_ids:
            return f"{name}({','.join(self.signature_ids)})"
        if self.reason:
            return f"{name}({self.reason})"
        return name


def combine(verdicts: Iterable[Verdict]) -> Verdict:
    """Fold member verdicts into the verdict of their container.

    Infected dominates (signature ids are merged), then Unscannable (the first
    reason encountered is kept), then Clean.

    Args:
        verdicts (Iterable[Verdict]): Member verdicts, in scan order

    Returns:
        Verdict: Combined verdict; Clean when ``verdicts`` is empty
    """
    infected: set[str] = set()
    unscannable = None
    for verdict in verdicts:
        if verdict.is_infected:
            infected.update(verdict.signature_ids)
        elif verdict.is_unscannable and unscannable is None:
            unscannable = verdict
    if infected:
        return Verdict.infected(infected)
    return unscannable or Verdict.clean()
