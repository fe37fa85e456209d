#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

from scanshear.parameters import BudgetParameters


class BudgetExceeded(Exception):
    """Raised when expanding an object would go past one of its budget limits.

    Args:
        limit (str): Which limit, one of ``depth``, ``expanded-bytes``,
            ``entries`` or ``ratio``
    """

    def __init__(self, limit: str):
        super().__init__(f"Scan budget exceeded: {limit}")
        self.limit = limit

    @property
    def reason(self) -> str:
        return f"budget-exceeded:{self.limit}"


class BudgetTracker:
    """Resources consumed while expanding one top-level object.

    Expanded bytes are charged before they are kept, so the total held never
    exceeds ``max_expanded_bytes``. Once a limit on the whole object is hit,
    ``exhausted`` keeps the reason and later members are not expanded.

    Args:
        budget (BudgetParameters): Limits for the object
    """

    def __init__(self, budget: BudgetParameters):
        self.budget = budget
        self.expanded_bytes = 0
        self.entries = 0
        self.exhausted: str | None = None

    @property
    def remaining_bytes(self) -> int:
        return self.budget.max_expanded_bytes - self.expanded_bytes

    def check_depth(self, depth: int) -> None:
        if depth > self.budget.max_depth:
            raise BudgetExceeded("depth")

    def enter_member(self) -> None:
        if self.entries >= self.budget.max_entries:
            self._exhaust("entries")
        self.entries += 1

    def check_declared(self, size: int | None, compressed_size: int | None) -> None:
        """Reject a member up front from the sizes its container declares."""
        if size is None:
            return
        if size > self.remaining_bytes:
            self._exhaust("expanded-bytes")
        if compressed_size is not None and size > self.budget.max_ratio * max(compressed_size, 1):
            raise BudgetExceeded("ratio")

    def charge(self, n: int, member_expanded: int, compressed_size: int | None) -> None:
        """Account for ``n`` more expanded bytes of a member.

        Args:
            n (int): Bytes about to be kept
            member_expanded (int): Bytes of this member already kept
            compressed_size (int | None): Stored size of the member, if known

        Raises:
            BudgetExceeded: Raised before the bytes would exceed a limit
        """
        if n > self.remaining_bytes:
            self._exhaust("expanded-bytes")
        if compressed_size is not None and member_expanded + n > self.budget.max_ratio * max(
            compressed_size,
            1,
        ):
            raise BudgetExceeded("ratio")
        self.expanded_bytes += n

    def _exhaust(self, limit: str):
        exc = BudgetExceeded(limit)
        self.exhausted = exc.reason
        raise exc
