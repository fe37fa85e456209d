#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import BinaryIO

from scanshear.sigdb import Signature, SignatureDb

from .automaton import AhoCorasick

log = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 1024 * 1024


@dataclass(frozen=True, order=True)
class MatchHit:
    """A signature occurrence.

    Ordering is by offset, then signature id.

    Attributes:
        offset (int): Byte offset of the pattern start within the scanned object
        signature_id (str): Id of the matching signature
    """

    offset: int
    signature_id: str


class Matcher:
    """Two-phase signature matcher.

    Phase one finds every occurrence of any signature's quick-pattern (its
    longest concrete run) in a single automaton pass. Phase two verifies the
    full wildcard pattern, only at the positions phase one reported.

    Matchers are immutable once built and may be shared between threads.

    Args:
        db (SignatureDb): Validated signature database
    """

    def __init__(self, db: SignatureDb):
        self.db = db
        quick_patterns: dict[bytes, int] = {}
        # quick-pattern index -> (signature, start of quick-pattern in signature)
        verify_table: list[list[tuple[Signature, int]]] = []
        for sig in db.signatures:
            start, run = sig.quick_pattern
            k = quick_patterns.setdefault(run, len(quick_patterns))
            if k == len(verify_table):
                verify_table.append([])
            verify_table[k].append((sig, start))
        self.verify_table = tuple(tuple(entries) for entries in verify_table)
        self.automaton = AhoCorasick(list(quick_patterns))
        self._quick_lengths = tuple(len(p) for p in quick_patterns)
        log.info(
            "Built matcher: %d signatures, %d quick-patterns, %d states",
            len(db),
            len(quick_patterns),
            self.automaton.n_states,
        )

    @property
    def version(self) -> int:
        return self.db.version

    @property
    def max_pattern_length(self) -> int:
        return self.db.max_pattern_length

    @property
    def signature_ids(self) -> frozenset[str]:
        return frozenset(sig.id for entries in self.verify_table for sig, _ in entries)

    def scan(
        self,
        data: bytes,
        *,
        base: int = 0,
        verify: bool = True,
    ) -> set[MatchHit]:
        """Scan one window of an object.

        Args:
            data (bytes): Window contents
            base (int, optional): Offset of the window within the object, used
                for fixed-offset signatures and reported offsets. Defaults to 0.
            verify (bool, optional): Verify the full pattern. Defaults to True.

        Returns:
            set[MatchHit]: Hits with absolute offsets
        """
        hits = set()
        size = len(data)
        for end, k in self.automaton.iter_matches(data):
            quick_start = end + 1 - self._quick_lengths[k]
            for sig, offset_in_sig in self.verify_table[k]:
                start = quick_start - offset_in_sig
                if start < 0 or start + sig.length > size:
                    continue
                if sig.offset is not None and base + start != sig.offset:
                    continue
                if verify and not sig.matches_at(data, start):
                    continue
                hits.add(MatchHit(base + start, sig.id))
        return hits


def build_matcher(db: SignatureDb) -> Matcher:
    """Build a matcher for all signatures of ``db``.

    Args:
        db (SignatureDb): Validated signature database

    Returns:
        Matcher: Immutable matcher
    """
    return Matcher(db)


def scan_bytes(m: Matcher, data: bytes) -> list[MatchHit]:
    """Return every exact signature match in ``data``.

    Args:
        m (Matcher): Matcher to use
        data (bytes): Object contents

    Returns:
        list[MatchHit]: Hits sorted by offset then signature id
    """
    return sorted(m.scan(bytes(data)))


def quick_mode_scan(m: Matcher, data: bytes) -> list[MatchHit]:
    """Report every quick-pattern occurrence without exact verification.

    Faster than ``scan_bytes`` and never misses one of its hits, but may report
    signatures whose remaining bytes do not match.

    Args:
        m (Matcher): Matcher to use
        data (bytes): Object contents

    Returns:
        list[MatchHit]: Hits sorted by offset then signature id
    """
    return sorted(m.scan(bytes(data), verify=False))


def scan_stream(
    m: Matcher,
    stream: BinaryIO,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    *,
    quick: bool = False,
    on_chunk=None,
) -> list[MatchHit]:
    """Scan a byte stream in windows, without holding it in memory.

    Consecutive windows overlap by the longest pattern length minus one, so
    every occurrence lies wholly inside at least one window. Hits found twice in
    an overlap are reported once.

    Args:
        m (Matcher): Matcher to use
        stream (BinaryIO): Readable byte stream
        chunk_size (int, optional): Bytes read per window. Defaults to 1 MiB.
        quick (bool, optional): Skip exact verification. Defaults to False.
        on_chunk (Callable[[bytes], None], optional): Called with each chunk as
            it is read (ex: to update a digest)

    Returns:
        list[MatchHit]: Hits sorted by offset then signature id
    """
    if chunk_size <= 0:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    overlap = max(m.max_pattern_length - 1, 0)
    hits: set[MatchHit] = set()
    tail = b""
    consumed = 0
    while True:
        chunk = stream.read(chunk_size)
        if not chunk:
            break
        if on_chunk is not None:
            on_chunk(chunk)
        window = tail + chunk
        base = consumed - len(tail)
        hits |= m.scan(window, base=base, verify=not quick)
        consumed += len(chunk)
        tail = window[-overlap:] if overlap else b""
    return sorted(hits)
