"""Discrete-event simulation core.

A single heap of (time, sequence, callback) events owns all ordering;
actors run to completion per event. Ties break by scheduling order, so
a run is fully deterministic for a fixed seed and workload.
"""

from __future__ import annotations

import heapq
from typing import Callable, Optional


class DeadlockError(RuntimeError):
    """The event budget was exhausted before the scenario settled."""


class Simulation:
    def __init__(self, start_ms: int = 0) -> None:
        self.now: int = start_ms
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0
        self.events_processed = 0

    def call_at(self, at_ms: int, fn: Callable[[], None]) -> None:
        if at_ms < self.now:
            raise ValueError(f"cannot schedule at {at_ms}, now is {self.now}")
        heapq.heappush(self._heap, (at_ms, self._seq, fn))
        self._seq += 1

    def call_in(self, delay_ms: int, fn: Callable[[], None]) -> None:
        self.call_at(self.now + delay_ms, fn)

    @property
    def pending(self) -> int:
        return len(self._heap)

    def run(self, until_ms: Optional[int] = None, max_events: int = 5_000_000) -> None:
        """Drain events until the heap empties or virtual time passes
        ``until_ms``. Raises DeadlockError past ``max_events``."""
        budget = max_events
        while self._heap:
            at_ms, _, fn = self._heap[0]
            if until_ms is not None and at_ms > until_ms:
                break
            heapq.heappop(self._heap)
            self.now = at_ms
            fn()
            self.events_processed += 1
            budget -= 1
            if budget <= 0:
                raise DeadlockError(f"no quiescence after {max_events} events (t={self.now})")
        if until_ms is not None and self.now < until_ms:
            self.now = until_ms
