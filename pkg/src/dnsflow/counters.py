from __future__ import annotations

import threading
from collections import defaultdict


class Counters:
    """Named integer counters, incremented lock-free from many threads.

    Each thread writes to its own dict; ``snapshot`` sums them. Totals are
    exact once the writing threads have finished.
    """

    def __init__(self) -> None:
        self._local = threading.local()
        self._parts: list[defaultdict[str, int]] = []
        self._lock = threading.Lock()

    def _mine(self) -> defaultdict[str, int]:
        try:
            return self._local.part
        except AttributeError:
            part: defaultdict[str, int] = defaultdict(int)
            with self._lock:
                self._parts.append(part)
            self._local.part = part
            return part

    def incr(self, key: str, n: int = 1) -> None:
        self._mine()[key] += n

    def __getitem__(self, key: str) -> int:
        with self._lock:
            parts = list(self._parts)
        return sum(p.get(key, 0) for p in parts)

    def snapshot(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        with self._lock:
            parts = list(self._parts)
        for part in parts:
            for key, value in list(part.items()):
                out[key] += value
        return dict(out)
