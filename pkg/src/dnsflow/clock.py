"""Timestamp synchronisation between DNS and flow readers during replay.

Live streams interleave naturally. A file replay does not: one reader can
race hours ahead of the other, rotating maps before earlier flows were looked
up, or looking flows up before their DNS answers were stored. ``ReplayClock``
makes concurrent replay equivalent to merging both inputs by timestamp with
DNS first on ties:

* DNS records at ``t`` are released once every flow before ``t`` is done;
* flows at ``t`` are released once every DNS record at or before ``t`` is done.

Each reader announces a frontier (it will never release anything earlier),
so no reader waits on one that is itself waiting on it.
"""

from __future__ import annotations

import math
import threading
from collections import Counter

DNS = "dns"
FLOW = "flow"
_OTHER = {DNS: FLOW, FLOW: DNS}


class ReplayClock:
    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._frontier: dict[str, dict[int, float]] = {DNS: {}, FLOW: {}}
        self._pending: dict[str, Counter] = {DNS: Counter(), FLOW: Counter()}
        self._next_token = 0

    def register(self, kind: str) -> int:
        with self._cond:
            token = self._next_token
            self._next_token += 1
            self._frontier[kind][token] = -math.inf
            return token

    def advance(self, kind: str, token: int, ts: float) -> None:
        """Promise that ``token`` releases nothing earlier than ``ts``."""
        with self._cond:
            if ts > self._frontier[kind][token]:
                self._frontier[kind][token] = ts
                self._cond.notify_all()

    def _ready(self, kind: str, ts: float) -> bool:
        other = _OTHER[kind]
        frontiers = self._frontier[other].values()
        pending = self._pending[other]
        if kind == DNS:
            return all(f >= ts for f in frontiers) and not any(t < ts for t in pending)
        return all(f > ts for f in frontiers) and not any(t <= ts for t in pending)

    def acquire(self, kind: str, token: int, ts: float, n: int) -> None:
        """Block until ``n`` records at ``ts`` may enter the pipeline."""
        with self._cond:
            if ts > self._frontier[kind][token]:
                self._frontier[kind][token] = ts
                self._cond.notify_all()
            while not self._ready(kind, ts):
                self._cond.wait()
            self._pending[kind][ts] += n

    def release(self, kind: str, ts: float, n: int) -> None:
        """``n`` records released at ``ts`` have been fully processed."""
        if n == 0:
            return
        with self._cond:
            pending = self._pending[kind]
            pending[ts] -= n
            if pending[ts] <= 0:
                del pending[ts]
                self._cond.notify_all()

    def finish(self, kind: str, token: int) -> None:
        with self._cond:
            self._frontier[kind][token] = math.inf
            self._cond.notify_all()
