from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

DEADLINE_US = 1000.0


@dataclass(frozen=True)
class TimingStats:
    count: int
    mean: float
    max: float
    p99: float
    missed_deadlines: int

    def line(self) -> str:
        return (f"frames={self.count} mean={self.mean:.1f}us max={self.max:.1f}us "
                f"p99={self.p99:.1f}us missed={self.missed_deadlines}")


class TimingMonitor:
    """Frame-duration statistics; a frame misses only when it runs past the deadline."""

    def __init__(self, deadline_us: float = DEADLINE_US):
        self.deadline_us = deadline_us
        self._lock = threading.Lock()
        self._durations: list[float] = []
        self._missed = 0

    def record(self, duration_us: float) -> TimingStats:
        if duration_us < 0:
            raise ValueError("frame duration must be non-negative")
        with self._lock:
            self._durations.append(float(duration_us))
            if duration_us > self.deadline_us:
                self._missed += 1
            return self._stats()

    def stats(self) -> TimingStats:
        with self._lock:
            return self._stats()

    def _stats(self) -> TimingStats:
        if not self._durations:
            return TimingStats(0, 0.0, 0.0, 0.0, 0)
        d = np.array(self._durations)
        return TimingStats(len(d), float(d.mean()), float(d.max()), float(np.percentile(d, 99)), self._missed)
