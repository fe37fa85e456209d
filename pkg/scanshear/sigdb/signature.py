#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

# A pattern element is a concrete byte value or None for a single-byte wildcard
PatternByte = int | None

MIN_PATTERN_LENGTH = 4
MIN_CONCRETE_BYTES = 2
MIN_QUICK_PATTERN = 2


@dataclass(frozen=True)
class Signature:
    """One detection pattern.

    Attributes:
        id (str): Token unique within its database
        name (str): Human readable label
        pattern (tuple[PatternByte, ...]): Byte values, ``None`` marks a wildcard
        offset (int | None): Fixed start offset of the pattern, or ``None`` when
            the pattern may start anywhere
        family (str | None): Optional token grouping variants of one virus
    """

    id: str
    name: str
    pattern: tuple[PatternByte, ...]
    offset: int | None = None
    family: str | None = None

    @property
    def length(self) -> int:
        return len(self.pattern)

    @property
    def concrete_count(self) -> int:
        return sum(b is not None for b in self.pattern)

    @cached_property
    def segments(self) -> tuple[tuple[int, bytes], ...]:
        """Maximal runs of concrete bytes as ``(start index, bytes)`` pairs."""
        runs = []
        start = None
        for i, b in enumerate((*self.pattern, None)):
            if b is not None and start is None:
                start = i
            elif b is None and start is not None:
                runs.append((start, bytes(self.pattern[start:i])))
                start = None
        return tuple(runs)

    @cached_property
    def quick_pattern(self) -> tuple[int, bytes]:
        """Longest concrete run (leftmost on ties) as ``(start index, bytes)``.

        The matcher searches for this run first and only verifies the full
        pattern where it occurs.
        """
        best = (0, b"")
        for start, run in self.segments:
            if len(run) > len(best[1]):
                best = (start, run)
        return best

    @property
    def hex_pattern(self) -> str:
        return "".join("??" if b is None else f"{b:02x}" for b in self.pattern)

    def matches_at(self, data: bytes, start: int) -> bool:
        """Whether every concrete byte of the pattern matches ``data`` at ``start``."""
        if start < 0 or start + self.length > len(data):
            return False
        return all(
            data[start + i : start + i + len(run)] == run for i, run in self.segments
        )


@dataclass(frozen=True)
class SignatureDb:
    """Versioned, immutable collection of signatures.

    Attributes:
        version (int): Version of the signature update. Scan records made under
            another version are not trusted.
        signatures (tuple[Signature, ...]): Signatures in file order
    """

    version: int
    signatures: tuple[Signature, ...] = ()
    _by_id: dict[str, Signature] = field(
        init=False,
        repr=False,
        compare=False,
        default_factory=dict,
    )

    def __post_init__(self):
        object.__setattr__(self, "signatures", tuple(self.signatures))
        by_id = {}
        for sig in self.signatures:
            if sig.id in by_id:
                raise ValueError(f"Duplicate signature id: {sig.id}")
            by_id[sig.id] = sig
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.signatures)

    def __iter__(self):
        return iter(self.signatures)

    def __getitem__(self, signature_id: str) -> Signature:
        return self._by_id[signature_id]

    def __contains__(self, signature_id: str) -> bool:
        return signature_id in self._by_id

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(sig.id for sig in self.signatures)

    @property
    def max_pattern_length(self) -> int:
        return max((sig.length for sig in self.signatures), default=0)


def family_index(db: SignatureDb) -> dict[str, list[str]]:
    """Group signature ids by family.

    Signatures without a family are left out. Ids keep database order.

    Args:
        db (SignatureDb): Signature database

    Returns:
        dict[str, list[str]]: Family token to the ids of its signatures
    """
    index: dict[str, list[str]] = {}
    for sig in db.signatures:
        if sig.family is not None:
            index.setdefault(sig.family, []).append(sig.id)
    return index
