"""Deterministic discrete-event core: virtual clock, ordered event queue,
and seeded per-purpose random streams.

Time is kept as integer microseconds.  Events fire in (time, insertion
order) so that runs replay bit-identically for a fixed master seed.
"""

from __future__ import annotations

import hashlib
import heapq
import random

# One radio slot (30 kHz numerology equivalent).
SLOT_US = 500

US_PER_S = 1_000_000


def seconds(t_s: float) -> int:
    """Convert seconds to integer microseconds."""
    return int(round(t_s * US_PER_S))


def ms(t_ms: float) -> int:
    """Convert milliseconds to integer microseconds."""
    return int(round(t_ms * 1000))


class SchedulingError(Exception):
    """Raised when an event is scheduled in the past (configuration bug)."""


class RngStream(random.Random):
    """Deterministic random stream derived from (master_seed, stream_id).

    The seed is taken from a SHA-256 digest so distinct labels give
    independent, platform-stable sequences.
    """

    def __new__(cls, *args, **kwargs):
        return super().__new__(cls)

    def __init__(self, master_seed: int, stream_id: str):
        digest = hashlib.sha256(f"{master_seed}/{stream_id}".encode()).digest()
        super().__init__(int.from_bytes(digest[:8], "big"))
        self.stream_id = stream_id
        self.master_seed = master_seed


def uniform_draw(stream: random.Random) -> float:
    """One draw in [0, 1) from the given stream."""
    return stream.random()


class Simulator:
    """Virtual clock plus a (fire_at, seq)-ordered event queue.

    Callbacks are scheduled with an optional single argument; ties at the
    same timestamp execute FIFO in scheduling order.
    """

    def __init__(self, master_seed: int = 1):
        self.now = 0
        self.master_seed = master_seed
        self._heap: list = []
        self._seq = 0
        self._streams: dict[str, RngStream] = {}

    def stream(self, stream_id: str) -> RngStream:
        """Named random stream, created on first use."""
        st = self._streams.get(stream_id)
        if st is None:
            st = RngStream(self.master_seed, stream_id)
            self._streams[stream_id] = st
        return st

    def schedule(self, fire_at: int, callback, arg=None) -> None:
        if fire_at < self.now:
            raise SchedulingError(
                f"event at t={fire_at} scheduled in the past (now={self.now})"
            )
        heapq.heappush(self._heap, (fire_at, self._seq, callback, arg))
        self._seq += 1

    def schedule_in(self, delay: int, callback, arg=None) -> None:
        self.schedule(self.now + delay, callback, arg)

    def run_until(self, t_end: int) -> None:
        """Execute all events with fire_at <= t_end; leave clock at t_end."""
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            fire_at, _, callback, arg = heapq.heappop(heap)
            self.now = fire_at
            if arg is None:
                callback()
            else:
                callback(arg)
        self.now = t_end

    def pending(self) -> int:
        return len(self._heap)
