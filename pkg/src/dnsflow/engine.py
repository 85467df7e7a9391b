"""Wires sources, pipelines, the store and the writer into one run."""

from __future__ import annotations

import heapq
import logging
import os
import resource
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

from dnsflow.clock import DNS, FLOW, ReplayClock
from dnsflow.counters import Counters
from dnsflow.dns_pipeline import fill_up_worker, filter_valid_response
from dnsflow.flow_pipeline import look_up_worker, resolve
from dnsflow.io import MemorySink, OutputSink, StreamSource, write_worker
from dnsflow.model import CorrelatedRecord, DnsRecord, EngineConfig, FlowRecord, ParseError
from dnsflow.queues import Batch, BoundedQueue
from dnsflow.store import MapStore

log = logging.getLogger(__name__)

SourceLike = Union[StreamSource, str, "os.PathLike[str]"]


class EngineError(RuntimeError):
    def __init__(self, message: str, report: "RunReport") -> None:
        super().__init__(message)
        self.report = report


@dataclass
class StreamStats:
    """Per-stream line accounting.

    ``parsed`` counts every successfully parsed line; of those, ``filtered``
    were rejected as invalid responses, ``queue_drops`` found the queue full
    and the rest were ``enqueued``.
    """

    name: str
    kind: str
    lines_received: int = 0
    buffer_drops: int = 0
    parse_errors: int = 0
    parsed: int = 0
    filtered: int = 0
    queue_drops: int = 0
    enqueued: int = 0
    error: Optional[str] = None

    @property
    def accepted(self) -> int:
        """Parsed lines that entered the pipeline or were filtered out."""
        return self.enqueued + self.filtered

    def conserved(self) -> bool:
        return (
            self.lines_received
            == self.accepted + self.parse_errors + self.buffer_drops + self.queue_drops
            and self.parsed == self.enqueued + self.filtered + self.queue_drops
        )


@dataclass
class RunReport:
    dns_streams: list[StreamStats]
    flow_streams: list[StreamStats]
    store_counters: dict[str, int]
    emitted: int
    written: int
    total_bytes: int
    correlated_bytes: int
    max_write_delay: int
    wall_seconds: float
    peak_entries: int
    final_entries: int
    entry_samples: list[tuple[int, int]] = field(default_factory=list)
    chain_histogram: dict[int, int] = field(default_factory=dict)
    rss_peak_kb: int = 0
    errors: list[str] = field(default_factory=list)

    @property
    def correlation_rate(self) -> float:
        return self.correlated_bytes / self.total_bytes if self.total_bytes else 0.0

    @property
    def flows_parsed(self) -> int:
        return sum(s.parsed for s in self.flow_streams)

    @property
    def queue_drops(self) -> int:
        return sum(s.queue_drops for s in self.dns_streams + self.flow_streams)

    @property
    def buffer_drops(self) -> int:
        return sum(s.buffer_drops for s in self.dns_streams + self.flow_streams)

    @property
    def drops(self) -> int:
        return self.queue_drops + self.buffer_drops

    def conserved(self) -> bool:
        streams_ok = all(s.conserved() for s in self.dns_streams + self.flow_streams)
        flow_drops = sum(s.queue_drops for s in self.flow_streams)
        return streams_ok and self.flows_parsed == self.emitted + flow_drops

    def summary(self) -> dict[str, object]:
        c = self.store_counters
        out: dict[str, object] = {
            "flows_emitted": self.emitted,
            "records_written": self.written,
            "total_bytes": self.total_bytes,
            "correlated_bytes": self.correlated_bytes,
            "correlation_rate": round(self.correlation_rate, 6),
            "buffer_drops": self.buffer_drops,
            "queue_drops": self.queue_drops,
            "max_write_delay": self.max_write_delay,
            "wall_seconds": round(self.wall_seconds, 3),
            "peak_entries": self.peak_entries,
            "final_entries": self.final_entries,
            "rss_peak_kb": self.rss_peak_kb,
            "rotations_ip_name": c.get("rotations_ip_name", 0),
            "rotations_name_cname": c.get("rotations_name_cname", 0),
            "memoizations": c.get("memoizations", 0),
            "memo_hits": c.get("memo_hits", 0),
            "evictions": c.get("evictions", 0),
            "conserved": self.conserved(),
        }
        for s in self.dns_streams + self.flow_streams:
            prefix = f"{s.kind}[{s.name}]"
            for key in ("lines_received", "buffer_drops", "parse_errors", "parsed",
                        "filtered", "queue_drops", "enqueued"):
                out[f"{prefix}.{key}"] = getattr(s, key)
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.summary().items())


def _as_source(src: SourceLike, cfg: EngineConfig) -> StreamSource:
    if isinstance(src, StreamSource):
        return src
    return StreamSource.parse(src, buffer_capacity=cfg.buffer_capacity)


class Engine:
    """Concurrent correlation over any number of DNS and flow streams.

    With only pull sources (files, stdin, in-memory lines) the run is a
    replay: a ``ReplayClock`` keeps both sides in timestamp order and full
    queues block the reader. With a TCP source the run is live: no
    synchronisation, and ``drop_when_full`` decides whether full queues drop.
    """

    def __init__(
        self,
        config: Optional[EngineConfig] = None,
        dns_sources: Sequence[SourceLike] = (),
        flow_sources: Sequence[SourceLike] = (),
        sink: Optional[OutputSink] = None,
        store: Optional[MapStore] = None,
        replay: Optional[bool] = None,
    ) -> None:
        self.config = cfg = config or EngineConfig()
        self.dns_sources = [_as_source(s, cfg) for s in dns_sources]
        self.flow_sources = [_as_source(s, cfg) for s in flow_sources]
        self.sink = sink if sink is not None else MemorySink(
            flush_records=cfg.flush_records, flush_seconds=cfg.flush_seconds
        )
        self.store = store if store is not None else MapStore(cfg)
        if replay is None:
            replay = not any(s.live for s in self.dns_sources + self.flow_sources)
        self.replay = replay
        self.counters = Counters()
        self._errors: list[str] = []
        self._errors_lock = threading.Lock()

    def stop(self) -> None:
        for src in self.dns_sources + self.flow_sources:
            src.stop()

    def _guard(self, fn: Callable, *args) -> Callable[[], None]:
        def run() -> None:
            try:
                fn(*args)
            except Exception as exc:
                log.exception("worker failed")
                with self._errors_lock:
                    self._errors.append(f"{type(exc).__name__}: {exc}")
        return run

    def _dispatch(
        self,
        kind: str,
        source: StreamSource,
        stats: StreamStats,
        queue: BoundedQueue,
        clock: Optional[ReplayClock],
        token: Optional[int],
    ) -> None:
        cfg = self.config
        parse = DnsRecord.from_line if kind == DNS else FlowRecord.from_line
        check = filter_valid_response if kind == DNS else None
        batch_size = cfg.batch_size
        drop = cfg.drop_when_full
        frontier = None
        lineno = 0

        def emit(batch: Batch) -> None:
            n = len(batch)
            if clock is not None:
                clock.acquire(kind, token, batch.ts, n)
            if drop:
                dropped = queue.offer_batch(batch)
                if dropped and clock is not None:
                    clock.release(kind, batch.ts, dropped)
            else:
                queue.put_batch(batch)
                dropped = 0
            stats.queue_drops += dropped
            stats.enqueued += n - dropped

        batch = Batch()
        try:
            for chunk in source.read_stream():
                for line in chunk:
                    lineno += 1
                    try:
                        rec = parse(line, lineno)
                    except ParseError:
                        stats.parse_errors += 1
                        continue
                    stats.parsed += 1
                    if check is not None and not check(rec):
                        stats.filtered += 1
                        continue
                    ts = rec.ts
                    if frontier is not None and ts < frontier:
                        ts = frontier
                    if batch and (ts != batch.ts or len(batch) >= batch_size):
                        emit(batch)
                        batch = Batch()
                    if frontier is None or ts > frontier:
                        frontier = ts
                        if clock is not None:
                            clock.advance(kind, token, ts)
                    if not batch:
                        batch.ts = ts
                    batch.append(rec)
                if not self.replay and batch:
                    emit(batch)
                    batch = Batch()
            if batch:
                emit(batch)
        finally:
            if clock is not None:
                clock.finish(kind, token)
            queue.close()
            stats.lines_received = source.lines_received
            stats.buffer_drops = source.buffer_drops
            if source.error is not None:
                stats.error = str(source.error)
                with self._errors_lock:
                    self._errors.append(f"{source.name}: {source.error}")

    def run(self) -> RunReport:
        cfg = self.config
        if not self.dns_sources and not self.flow_sources:
            raise ValueError("no sources given")
        for src in self.dns_sources + self.flow_sources:
            src.open()
        started = time.perf_counter()
        clock = ReplayClock() if self.replay else None
        write_q: BoundedQueue = BoundedQueue(cfg.queue_capacity, "write")
        dispatchers: list[threading.Thread] = []
        fillers: list[threading.Thread] = []
        lookers: list[threading.Thread] = []
        dns_stats = [StreamStats(s.name, DNS) for s in self.dns_sources]
        flow_stats = [StreamStats(s.name, FLOW) for s in self.flow_sources]

        plan = [(DNS, s, st) for s, st in zip(self.dns_sources, dns_stats)]
        plan += [(FLOW, s, st) for s, st in zip(self.flow_sources, flow_stats)]
        tokens = [clock.register(kind) if clock else None for kind, _, _ in plan]
        for (kind, src, st), token in zip(plan, tokens):
            q: BoundedQueue = BoundedQueue(cfg.queue_capacity, f"{kind}:{src.name}")
            dispatchers.append(threading.Thread(
                target=self._guard(self._dispatch, kind, src, st, q, clock, token),
                name=f"dispatch-{kind}-{src.name}",
            ))
            if kind == DNS:
                for i in range(cfg.fill_workers):
                    fillers.append(threading.Thread(
                        target=self._guard(fill_up_worker, q, self.store, clock, self.counters),
                        name=f"fill-{src.name}-{i}",
                    ))
            else:
                for i in range(cfg.lookup_workers):
                    lookers.append(threading.Thread(
                        target=self._guard(
                            look_up_worker, q, self.store, write_q, cfg, clock, self.counters
                        ),
                        name=f"lookup-{src.name}-{i}",
                    ))
        writers = [
            threading.Thread(target=self._guard(write_worker, write_q, self.sink), name=f"write-{i}")
            for i in range(cfg.write_workers)
        ]
        threads = dispatchers + fillers + lookers + writers
        for t in threads:
            t.start()
        for t in dispatchers + fillers + lookers:
            t.join()
        write_q.close()
        for t in writers:
            t.join()
        self.sink.close()
        wall = time.perf_counter() - started

        c = self.counters.snapshot()
        store_counters = self.store.counters.snapshot()
        hist = {
            int(k.split("_", 1)[1]): v for k, v in c.items() if k.startswith("chain_")
        }
        errors = list(self._errors)
        if self.sink.error is not None:
            errors.append(f"sink: {self.sink.error}")
        report = RunReport(
            dns_streams=dns_stats,
            flow_streams=flow_stats,
            store_counters=store_counters,
            emitted=c.get("emitted", 0),
            written=self.sink.written,
            total_bytes=c.get("total_bytes", 0),
            correlated_bytes=c.get("correlated_bytes", 0),
            max_write_delay=self.sink.max_write_delay,
            wall_seconds=wall,
            peak_entries=self.store.peak_entries(),
            final_entries=self.store.entry_count(),
            entry_samples=list(self.store.samples),
            chain_histogram=dict(sorted(hist.items())),
            rss_peak_kb=resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
            errors=errors,
        )
        if self.sink.error is not None:
            raise EngineError(f"output failed: {self.sink.error}", report)
        return report


def replay_records(
    dns: Iterable[DnsRecord],
    flows: Iterable[FlowRecord],
    config: Optional[EngineConfig] = None,
    store: Optional[MapStore] = None,
) -> list[CorrelatedRecord]:
    """Single-threaded reference run: merge by timestamp, DNS first on ties.

    Invalid DNS responses are skipped, as the engine's filter would.
    """
    config = config or EngineConfig()
    store = store if store is not None else MapStore(config)
    keyed_dns = _keyed(dns, 0)
    keyed_flows = _keyed(flows, 1)
    out: list[CorrelatedRecord] = []
    for _, kind, _, item in heapq.merge(keyed_dns, keyed_flows, key=lambda x: x[:3]):
        if kind == 0:
            if filter_valid_response(item):
                store.fill(item)
        else:
            out.append(resolve(store, item, config))
    return out


def _keyed(records, kind):
    # a late record is processed at the latest timestamp seen so far, exactly
    # as the concurrent dispatcher releases it
    high = None
    for i, rec in enumerate(records):
        if high is None or rec.ts > high:
            high = rec.ts
        yield high, kind, i, rec
