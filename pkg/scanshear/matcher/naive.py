#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

from scanshear.sigdb import SignatureDb

from .matcher import MatchHit


def naive_scan(db: SignatureDb, data: bytes, *, verify: bool = True) -> list[MatchHit]:
    """Search for each signature on its own, one pass over ``data`` per signature.

    Serves as the reference result for the automaton and as the baseline whose
    cost grows linearly with the number of signatures.

    Args:
        db (SignatureDb): Signature database
        data (bytes): Object contents
        verify (bool, optional): Verify the full pattern rather than only the
            quick-pattern. Defaults to True.

    Returns:
        list[MatchHit]: Hits sorted by offset then signature id
    """
    data = bytes(data)
    hits = []
    for sig in db.signatures:
        quick_start, quick = sig.quick_pattern
        pos = data.find(quick)
        while pos != -1:
            start = pos - quick_start
            in_bounds = start >= 0 and start + sig.length <= len(data)
            offset_ok = sig.offset is None or start == sig.offset
            if in_bounds and offset_ok and (not verify or sig.matches_at(data, start)):
                hits.append(MatchHit(start, sig.id))
            pos = data.find(quick, pos + 1)
    return sorted(set(hits))
