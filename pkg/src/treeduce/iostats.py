"""Byte and time accounting for random-access reads.

One ``IoStats`` instance belongs to one byte source (a local file or a
remote connector). Sources update their own stats from a single owner
thread; cross-worker aggregation happens through :meth:`IoStats.merge`,
never through shared mutation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


@dataclass
class IoStats:
    """Counters for caller-visible reads vs bytes actually moved.

    ``bytes_requested`` sums the lengths the caller asked for,
    ``bytes_fetched`` the bytes that crossed the wire (or came off disk),
    so ``amplification`` > 1 means the source over-fetched (read-ahead)
    and < 1 means cache hits served repeat requests.
    """

    bytes_requested: int = 0
    bytes_fetched: int = 0
    fetch_calls: int = 0
    read_calls: int = 0
    read_time_s: float = 0.0

    def record_request(self, nbytes: int) -> None:
        self.read_calls += 1
        self.bytes_requested += nbytes

    def record_fetch(self, nbytes: int, seconds: float) -> None:
        self.fetch_calls += 1
        self.bytes_fetched += nbytes
        self.read_time_s += seconds

    @property
    def amplification(self) -> float:
        return self.bytes_fetched / max(self.bytes_requested, 1)

    def merge(self, other: "IoStats") -> "IoStats":
        self.bytes_requested += other.bytes_requested
        self.bytes_fetched += other.bytes_fetched
        self.fetch_calls += other.fetch_calls
        self.read_calls += other.read_calls
        self.read_time_s += other.read_time_s
        return self

    @classmethod
    def merged(cls, stats: Iterable["IoStats"]) -> "IoStats":
        total = cls()
        for s in stats:
            total.merge(s)
        return total
