"""Per-receiver duplicate suppression on (link source, last sequence number)."""
from __future__ import annotations

from collections import OrderedDict
import enum


class Verdict(enum.Enum):
    FRESH = "fresh"
    DUPLICATE = "duplicate"


class DedupTable:
    """Last sequence number seen per source address.

    Only equality counts as a duplicate, so a wrapped (255 -> 0) or reordered
    older number is accepted as fresh.  When a new source would exceed
    ``capacity`` the least recently updated entry is evicted.
    """

    def __init__(self, capacity: int = 32):
        if capacity < 1:
            raise ValueError("dedup table needs room for at least one source")
        self.capacity = capacity
        self._last: OrderedDict = OrderedDict()
        self.evictions = 0

    def __len__(self) -> int:
        return len(self._last)

    def __contains__(self, src) -> bool:
        return src in self._last

    def last_seq(self, src):
        return self._last.get(src)

    def check_and_update(self, src, seq: int) -> Verdict:
        last = self._last.get(src)
        if last is not None and last == seq:
            return Verdict.DUPLICATE
        if last is None and len(self._last) >= self.capacity:
            self._last.popitem(last=False)
            self.evictions += 1
        self._last[src] = seq
        self._last.move_to_end(src)
        return Verdict.FRESH
