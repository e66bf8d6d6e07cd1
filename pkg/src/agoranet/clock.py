"""Logical-millisecond clocks. Simulated time is the default everywhere the
test harness runs; wall time exists for interactive use only."""

from __future__ import annotations

import time


class Clock:
    def now(self) -> int:
        raise NotImplementedError


class SimClock(Clock):
    """Manually advanced, monotone non-decreasing logical clock."""

    def __init__(self, start: int = 0):
        self._now = int(start)

    def now(self) -> int:
        return self._now

    def advance(self, delta_ms: int) -> int:
        if delta_ms < 0:
            raise ValueError("clock cannot move backwards")
        self._now += int(delta_ms)
        return self._now

    def set_at_least(self, at: int) -> int:
        if at > self._now:
            self._now = int(at)
        return self._now


class WallClock(Clock):
    def now(self) -> int:
        return int(time.time() * 1000)
