"""Time-based window cells: variable-size buffers with incremental aggregates.

Window membership is governed purely by tuple timestamps (event time); entries
expire only when a new value is inserted, never on a timer, so a store's state
is a function of the insert sequence alone.  An entry survives while its
timestamp is strictly inside (newest - span, newest].

Sum is kept with Neumaier compensation; min/max use monotonic wedge deques
(amortized O(1): each entry enters and leaves each wedge at most once).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from sheetstream.values import DIV0_ERROR, WindowRef


@dataclass(frozen=True)
class WindowSpec:
    stream: str
    attr: str
    span_ms: int


class WindowStore:
    __slots__ = ("spec", "buf", "_sum", "_comp", "count", "min_wedge", "max_wedge", "wedge_ops")

    def __init__(self, spec: WindowSpec):
        self.spec = spec
        self.buf: deque[tuple[float, float]] = deque()
        self._sum = 0.0
        self._comp = 0.0
        self.count = 0
        self.min_wedge: deque[tuple[float, float]] = deque()
        self.max_wedge: deque[tuple[float, float]] = deque()
        self.wedge_ops = 0  # pushes + pops, for the amortized-cost bound

    def insert(self, ts: float, v: float) -> int:
        """Append (ts, v), evict entries at or before ts - span; returns evicted count."""
        buf = self.buf
        assert not buf or ts >= buf[-1][0], "timestamps must be non-decreasing"
        entry = (ts, v)
        buf.append(entry)
        self.count += 1
        # Neumaier compensated add
        s = self._sum
        t = s + v
        if abs(s) >= abs(v):
            self._comp += (s - t) + v
        else:
            self._comp += (v - t) + s
        self._sum = t

        mn = self.min_wedge
        while mn and mn[-1][1] >= v:
            mn.pop()
            self.wedge_ops += 1
        mn.append(entry)
        mx = self.max_wedge
        while mx and mx[-1][1] <= v:
            mx.pop()
            self.wedge_ops += 1
        mx.append(entry)
        self.wedge_ops += 2

        cutoff = ts - self.spec.span_ms
        evicted = 0
        while buf[0][0] <= cutoff:
            old = buf.popleft()
            evicted += 1
            self.count -= 1
            ov = -old[1]
            s = self._sum
            t = s + ov
            if abs(s) >= abs(ov):
                self._comp += (s - t) + ov
            else:
                self._comp += (ov - t) + s
            self._sum = t
            if mn[0] is old:
                mn.popleft()
                self.wedge_ops += 1
            if mx[0] is old:
                mx.popleft()
                self.wedge_ops += 1
        # span > 0 guarantees the entry just inserted survives its own pass,
        # so buf is never empty here.
        return evicted

    def w_sum(self) -> float:
        return self._sum + self._comp if self.count else 0.0

    def w_count(self) -> float:
        return float(self.count)

    def w_avg(self):
        if self.count == 0:
            return DIV0_ERROR
        return (self._sum + self._comp) / self.count

    def w_min(self) -> float:
        return self.min_wedge[0][1] if self.count else 0.0

    def w_max(self) -> float:
        return self.max_wedge[0][1] if self.count else 0.0

    def summary(self) -> WindowRef:
        return WindowRef(self.count, self.w_sum(), self.w_min(), self.w_max())
