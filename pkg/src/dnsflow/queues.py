"""Bounded multi-producer/multi-consumer FIFO with drop accounting.

Items travel in batches to keep lock traffic low, but capacity and drops are
counted per record. ``put`` blocks when the queue is full (replay of files,
where the reader can wait); ``offer`` drops what does not fit (live streams,
which cannot be paused).
"""

from __future__ import annotations

import threading
from collections import deque
from typing import Any, Generic, Optional, Sequence, TypeVar

T = TypeVar("T")


class Batch(list):
    """A list of records tagged with the logical timestamp it was released at."""

    __slots__ = ("ts",)

    def __init__(self, items=(), ts: int = 0) -> None:
        super().__init__(items)
        self.ts = ts


class QueueClosed(Exception):
    pass


class BoundedQueue(Generic[T]):
    def __init__(self, capacity: int, name: str = "") -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.name = name
        self.size = 0
        self.drops = 0
        self.enqueued = 0
        self._items: deque[Sequence[T]] = deque()
        self._closed = False
        self._lock = threading.Lock()
        self._not_empty = threading.Condition(self._lock)
        self._not_full = threading.Condition(self._lock)

    def __len__(self) -> int:
        return self.size

    @property
    def closed(self) -> bool:
        return self._closed

    def put_batch(self, batch: Sequence[T], timeout: Optional[float] = None) -> None:
        """Enqueue ``batch``, waiting for room. An oversized batch waits for
        an empty queue rather than forever."""
        n = len(batch)
        if n == 0:
            return
        with self._not_full:
            if self._closed:
                raise QueueClosed(self.name)
            while self.size and self.size + n > self.capacity:
                if not self._not_full.wait(timeout):
                    raise TimeoutError(f"queue {self.name!r} stayed full")
                if self._closed:
                    raise QueueClosed(self.name)
            self._items.append(batch)
            self.size += n
            self.enqueued += n
            self._not_empty.notify()

    def offer_batch(self, batch: Sequence[T]) -> int:
        """Enqueue as much of ``batch`` as fits; return the number dropped."""
        n = len(batch)
        if n == 0:
            return 0
        with self._lock:
            if self._closed:
                raise QueueClosed(self.name)
            room = self.capacity - self.size
            if room <= 0:
                self.drops += n
                return n
            if room < n:
                head = type(batch)(batch[:room]) if isinstance(batch, list) else list(batch[:room])
                if isinstance(batch, Batch):
                    head.ts = batch.ts
                batch, dropped = head, n - room
            else:
                dropped = 0
            self._items.append(batch)
            self.size += len(batch)
            self.enqueued += len(batch)
            self.drops += dropped
            self._not_empty.notify()
            return dropped

    def put(self, item: T, timeout: Optional[float] = None) -> None:
        self.put_batch([item], timeout)

    def offer(self, item: T) -> bool:
        """Single-record ``offer_batch``; False when the record was dropped."""
        return self.offer_batch([item]) == 0

    def get_batch(self, timeout: Optional[float] = None) -> Optional[Sequence[T]]:
        """Next batch, or None once the queue is closed and drained.

        Raises TimeoutError if ``timeout`` elapses with nothing to return.
        """
        with self._not_empty:
            while not self._items:
                if self._closed:
                    return None
                if not self._not_empty.wait(timeout):
                    raise TimeoutError(f"queue {self.name!r} stayed empty")
            batch = self._items.popleft()
            self.size -= len(batch)
            self._not_full.notify_all()
            return batch

    def get(self, timeout: Optional[float] = None) -> Any:
        """Pop a single record (splitting the head batch if needed)."""
        with self._not_empty:
            while not self._items:
                if self._closed:
                    raise QueueClosed(self.name)
                if not self._not_empty.wait(timeout):
                    raise TimeoutError(f"queue {self.name!r} stayed empty")
            head = self._items[0]
            item = head[0]
            if len(head) == 1:
                self._items.popleft()
            else:
                self._items[0] = head[1:]
            self.size -= 1
            self._not_full.notify_all()
            return item

    def close(self) -> None:
        """No more puts; consumers drain what is left and then see None."""
        with self._lock:
            self._closed = True
            self._not_empty.notify_all()
            self._not_full.notify_all()


# Names used by the pipelines; all share the same semantics.
FillUpQueue = BoundedQueue
LookUpQueue = BoundedQueue
WriteQueue = BoundedQueue
