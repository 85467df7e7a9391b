"""Stream sources and correlated-output sinks.

A ``StreamSource`` owns a reader thread that pushes raw lines into a bounded
buffer. Pull sources (files, stdin, in-memory lines) wait when the buffer is
full. A TCP listener cannot pause its peer, so lines that arrive while the
buffer is full are dropped and counted.

Output lines are ``ts srcIP dstIP bytes packets result chain proto srcPort
dstPort`` (tab separated, chain joined with ``;``, empty result when the
flow was not correlated), written to ``correlated-<epoch>.tsv`` files rolled
on logical time.
"""

from __future__ import annotations

import enum
import logging
import os
import socket
import sys
import threading
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, TextIO

from dnsflow.model import CorrelatedRecord
from dnsflow.queues import BoundedQueue

log = logging.getLogger(__name__)


class StreamError(OSError):
    """A source that cannot be opened."""


class Origin(str, enum.Enum):
    FILE = "file"
    STDIN = "stdin"
    TCP = "tcp"
    MEMORY = "memory"


class StreamSource:
    def __init__(
        self,
        origin: Origin,
        path: "str | os.PathLike[str] | None" = None,
        *,
        lines: Optional[Iterable[str]] = None,
        host: str = "127.0.0.1",
        port: int = 0,
        connections: Optional[int] = 1,
        buffer_capacity: int = 200_000,
        chunk_lines: int = 1024,
        name: Optional[str] = None,
    ) -> None:
        self.origin = Origin(origin)
        self.path = Path(path) if path is not None else None
        self.host = host
        self.port = port
        self.connections = connections
        self.chunk_lines = chunk_lines
        self.buffer: BoundedQueue[str] = BoundedQueue(buffer_capacity, name or "buffer")
        self.name = name or self._default_name()
        self._lines = lines
        self._fh: Optional[TextIO] = None
        self._server: Optional[socket.socket] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.lines_received = 0
        self.lines_read = 0
        self.error: Optional[BaseException] = None

    def _default_name(self) -> str:
        if self.origin is Origin.FILE:
            return str(self.path)
        if self.origin is Origin.TCP:
            return f"tcp:{self.port}"
        return self.origin.value

    @classmethod
    def parse(cls, spec: "str | os.PathLike[str]", **kw) -> "StreamSource":
        """``-`` for stdin, ``tcp:PORT`` or ``tcp:HOST:PORT``, else a file path."""
        text = os.fspath(spec)
        if text == "-":
            return cls(Origin.STDIN, **kw)
        if text.startswith("tcp:"):
            parts = text.split(":")
            try:
                if len(parts) == 2:
                    return cls(Origin.TCP, port=int(parts[1]), connections=None, **kw)
                if len(parts) == 3:
                    return cls(Origin.TCP, host=parts[1], port=int(parts[2]), connections=None, **kw)
            except ValueError:
                pass
            raise ValueError(f"bad tcp source {text!r} (expected tcp:PORT or tcp:HOST:PORT)")
        return cls(Origin.FILE, text, **kw)

    @classmethod
    def from_lines(cls, lines: Iterable[str], **kw) -> "StreamSource":
        return cls(Origin.MEMORY, lines=lines, **kw)

    @property
    def buffer_drops(self) -> int:
        return self.buffer.drops

    @property
    def live(self) -> bool:
        return self.origin is Origin.TCP

    def open(self) -> "StreamSource":
        """Acquire the underlying resource; raises StreamError if unreadable."""
        if self.origin is Origin.FILE and self._fh is None:
            try:
                self._fh = open(self.path, encoding="utf-8", newline="\n")
            except OSError as exc:
                raise StreamError(f"cannot open {self.path}: {exc.strerror or exc}") from exc
        elif self.origin is Origin.TCP and self._server is None:
            try:
                srv = socket.create_server((self.host, self.port))
            except OSError as exc:
                raise StreamError(f"cannot listen on {self.host}:{self.port}: {exc}") from exc
            srv.settimeout(0.2)
            self.port = srv.getsockname()[1]
            self._server = srv
        return self

    def stop(self) -> None:
        """Stop accepting new data (TCP); pull sources finish on their own."""
        self._stop.set()

    def read_stream(self) -> Iterator[list[str]]:
        """Yield chunks of raw lines (without line endings) in arrival order."""
        self.open()
        self._thread = threading.Thread(target=self._produce, name=f"reader-{self.name}", daemon=True)
        self._thread.start()
        get = self.buffer.get_batch
        while True:
            chunk = get()
            if chunk is None:
                break
            self.lines_read += len(chunk)
            yield chunk
        self._thread.join()

    def _produce(self) -> None:
        try:
            if self.origin is Origin.TCP:
                self._produce_tcp()
            else:
                self._produce_pull()
        except Exception as exc:  # mid-stream failure ends this stream only
            log.error("stream %s failed: %s", self.name, exc)
            self.error = exc
        finally:
            self.buffer.close()
            if self._fh is not None:
                self._fh.close()
            if self._server is not None:
                self._server.close()

    def _produce_pull(self) -> None:
        if self.origin is Origin.FILE:
            lines: Iterable[str] = self._fh
        elif self.origin is Origin.STDIN:
            lines = sys.stdin
        else:
            lines = self._lines or ()
        put = self.buffer.put_batch
        chunk: list[str] = []
        n = self.chunk_lines
        for line in lines:
            chunk.append(line.rstrip("\r\n"))
            if len(chunk) >= n:
                self.lines_received += len(chunk)
                put(chunk)
                chunk = []
                if self._stop.is_set():
                    return
        if chunk:
            self.lines_received += len(chunk)
            put(chunk)

    def _produce_tcp(self) -> None:
        served = 0
        while not self._stop.is_set():
            if self.connections is not None and served >= self.connections:
                return
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            served += 1
            with conn:
                conn.settimeout(0.2)
                self._drain_connection(conn)

    def _drain_connection(self, conn: socket.socket) -> None:
        offer = self.buffer.offer_batch
        rest = b""
        while not self._stop.is_set():
            try:
                data = conn.recv(1 << 16)
            except socket.timeout:
                continue
            if not data:
                break
            parts = (rest + data).split(b"\n")
            rest = parts.pop()
            if parts:
                lines = [p.decode("utf-8", "replace").rstrip("\r") for p in parts]
                self.lines_received += len(lines)
                offer(lines)
        if rest:
            self.lines_received += 1
            offer([rest.decode("utf-8", "replace").rstrip("\r")])


def read_stream(source: StreamSource) -> Iterator[str]:
    """Flatten ``source.read_stream()`` into single lines."""
    for chunk in source.read_stream():
        yield from chunk


def format_output_line(rec: CorrelatedRecord) -> str:
    return rec.to_line()


def parse_output_line(line: str, lineno: Optional[int] = None) -> CorrelatedRecord:
    return CorrelatedRecord.from_line(line, lineno)


class OutputSink:
    """Buffers correlated lines and flushes them in batches.

    A flush happens once ``flush_records`` lines are pending or the logical
    clock (the largest record timestamp seen) is ``flush_seconds`` past the
    oldest pending record. ``max_write_delay`` is the largest gap between a
    record's timestamp and the logical time of the flush that wrote it.
    """

    def __init__(self, flush_records: int = 1000, flush_seconds: int = 1) -> None:
        self.flush_records = flush_records
        self.flush_seconds = flush_seconds
        self.written = 0
        self.flushes = 0
        self.max_write_delay = 0
        self.unwritten = 0
        self.error: Optional[BaseException] = None
        self._pending: list[CorrelatedRecord] = []
        self._oldest: Optional[int] = None
        self._now: Optional[int] = None
        self._lock = threading.Lock()

    def write(self, records: Sequence[CorrelatedRecord]) -> None:
        with self._lock:
            if self.error is not None:
                self.unwritten += len(records)
                return
            for rec in records:
                ts = rec.flow.ts
                if self._now is None or ts > self._now:
                    self._now = ts
                if self._oldest is None or ts < self._oldest:
                    self._oldest = ts
            self._pending.extend(records)
            if (
                len(self._pending) >= self.flush_records
                or self._now - self._oldest >= self.flush_seconds
            ):
                self._flush_locked()

    def _flush_locked(self) -> None:
        if not self._pending:
            return
        batch, self._pending = self._pending, []
        try:
            self._emit(batch)
        except OSError as exc:
            log.error("write failed: %s", exc)
            self.error = exc
            self.unwritten += len(batch)
            return
        finally:
            delay = self._now - self._oldest
            self._oldest = None
        self.written += len(batch)
        self.flushes += 1
        if delay > self.max_write_delay:
            self.max_write_delay = delay

    def flush(self) -> None:
        with self._lock:
            self._flush_locked()

    def close(self) -> None:
        with self._lock:
            self._flush_locked()
            self._close()

    def _emit(self, batch: list[CorrelatedRecord]) -> None:
        raise NotImplementedError

    def _close(self) -> None:
        pass


class MemorySink(OutputSink):
    """Keeps records in memory, in flush order."""

    def __init__(self, **kw) -> None:
        super().__init__(**kw)
        self.records: list[CorrelatedRecord] = []

    def _emit(self, batch: list[CorrelatedRecord]) -> None:
        self.records.extend(batch)

    def lines(self) -> list[str]:
        return [r.to_line() for r in self.records]


class DirectorySink(OutputSink):
    """Appends to ``correlated-<epoch>.tsv`` in ``directory``, where epoch is
    the record timestamp rounded down to ``roll_interval``."""

    def __init__(self, directory: "str | os.PathLike[str]", roll_interval: int = 3600, **kw) -> None:
        super().__init__(**kw)
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.roll_interval = roll_interval
        self._files: dict[int, TextIO] = {}

    def path_for(self, ts: int) -> Path:
        epoch = ts - ts % self.roll_interval
        return self.directory / f"correlated-{epoch}.tsv"

    def _emit(self, batch: list[CorrelatedRecord]) -> None:
        groups: dict[int, list[str]] = {}
        roll = self.roll_interval
        for rec in batch:
            ts = rec.flow.ts
            groups.setdefault(ts - ts % roll, []).append(rec.to_line())
        for epoch, lines in groups.items():
            fh = self._files.get(epoch)
            if fh is None:
                fh = open(self.path_for(epoch), "a", encoding="utf-8", newline="\n")
                self._files[epoch] = fh
            fh.write("\n".join(lines))
            fh.write("\n")
            fh.flush()

    def _close(self) -> None:
        for fh in self._files.values():
            fh.close()
        self._files.clear()

    def paths(self) -> list[Path]:
        return sorted(self.directory.glob("correlated-*.tsv"), key=_epoch_of)


def _epoch_of(path: Path) -> int:
    try:
        return int(path.stem.split("-", 1)[1])
    except (IndexError, ValueError):
        return 0


def write_worker(queue: BoundedQueue, sink: OutputSink) -> int:
    """Drain ``queue`` into ``sink`` until the queue is closed."""
    n = 0
    while True:
        batch = queue.get_batch()
        if batch is None:
            return n
        sink.write(batch)
        n += len(batch)


def iter_output(path: "str | os.PathLike[str]") -> Iterator[CorrelatedRecord]:
    """Records from an output file, or from every output file in a directory."""
    path = Path(path)
    files = (
        sorted(path.glob("correlated-*.tsv"), key=_epoch_of) if path.is_dir() else [path]
    )
    for f in files:
        with open(f, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    yield CorrelatedRecord.from_line(line, lineno)
