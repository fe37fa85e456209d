#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""Byte-level Aho-Corasick automaton compiled to a dense transition table.

The goto trie and failure links are built the usual way, then folded into a
deterministic table ``delta[state][byte]`` so that scanning costs one table
lookup per input byte regardless of how many patterns were added.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

ALPHABET = 256


class AhoCorasick:
    """Multi-pattern byte string search.

    Args:
        patterns (Sequence[bytes]): Non-empty patterns. Pattern ``k`` is reported
            as index ``k``; duplicates are allowed and reported separately.
    """

    def __init__(self, patterns: Sequence[bytes]):
        if any(len(p) == 0 for p in patterns):
            raise ValueError("Aho-Corasick patterns must be non-empty")
        self.patterns = tuple(bytes(p) for p in patterns)
        self._table, self._outputs = self._compile(self.patterns)
        log.debug(
            "Compiled %d patterns into %d automaton states",
            len(self.patterns),
            len(self._table),
        )

    @property
    def n_states(self) -> int:
        return len(self._table)

    def iter_matches(self, data: bytes) -> Iterator[tuple[int, int]]:
        """Yield ``(end index, pattern index)`` for every occurrence in ``data``.

        ``end index`` is the position of the last byte of the occurrence.
        Occurrences are produced in order of their end index.
        """
        table = self._table
        outputs = self._outputs
        state = 0
        for i, b in enumerate(data):
            state = table[state][b]
            if outputs[state]:
                for k in outputs[state]:
                    yield i, k

    @staticmethod
    def _compile(patterns: tuple[bytes, ...]) -> tuple[list[list[int]], list[tuple]]:
        # Goto trie
        goto: list[dict[int, int]] = [{}]
        terminal: list[list[int]] = [[]]
        for k, pattern in enumerate(patterns):
            node = 0
            for b in pattern:
                nxt = goto[node].get(b)
                if nxt is None:
                    nxt = len(goto)
                    goto.append({})
                    terminal.append([])
                    goto[node][b] = nxt
                node = nxt
            terminal[node].append(k)

        # Breadth-first order, so states near the root get small ids
        order = [0]
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for b in sorted(goto[node]):
                order.append(goto[node][b])
                queue.append(goto[node][b])
        rank = {old: new for new, old in enumerate(order)}

        n = len(order)
        delta = np.zeros((n, ALPHABET), dtype=np.int32)
        fail = [0] * n
        outputs: list[tuple[int, ...]] = [()] * n

        for old in order:
            state = rank[old]
            if state != 0:
                # Failure row first, own edges override it
                delta[state] = delta[fail[state]]
            outputs[state] = tuple(terminal[old]) + outputs[fail[state]]
            for b, child_old in goto[old].items():
                child = rank[child_old]
                # The failure target is where the parent's failure goes on b
                fail[child] = int(delta[fail[state], b]) if state != 0 else 0
                delta[state, b] = child

        return delta.tolist(), outputs
