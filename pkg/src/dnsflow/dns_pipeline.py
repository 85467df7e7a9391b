"""DNS side: parse answer lines, keep valid responses, fill the store."""

from __future__ import annotations

from typing import Optional

from dnsflow.clock import DNS, ReplayClock
from dnsflow.counters import Counters
from dnsflow.model import DnsRecord, ParseError, RType, ip_version
from dnsflow.queues import BoundedQueue
from dnsflow.store import MapStore

_FAMILY = {RType.A: 4, RType.AAAA: 6}


def parse_dns_line(line: str, lineno: Optional[int] = None) -> DnsRecord:
    """``ts<TAB>rtype<TAB>qname<TAB>ttl<TAB>answer``, one answer per line."""
    return DnsRecord.from_line(line, lineno)


def filter_valid_response(rec: DnsRecord) -> bool:
    """Keep A/AAAA/CNAME answers whose answer matches the record type."""
    if rec.ttl < 0 or not rec.answer:
        return False
    if rec.rtype is RType.CNAME:
        return ip_version(rec.answer) is None
    want = _FAMILY.get(rec.rtype)
    if want is None:
        return False
    return ip_version(rec.answer) == want


def fill_up_worker(
    queue: BoundedQueue,
    store: MapStore,
    clock: Optional[ReplayClock] = None,
    counters: Optional[Counters] = None,
) -> int:
    """Drain ``queue`` into ``store`` until it is closed; returns records filled."""
    filled = 0
    fill = store.fill
    while True:
        batch = queue.get_batch()
        if batch is None:
            break
        try:
            for rec in batch:
                fill(rec)
        finally:
            filled += len(batch)
            if counters is not None:
                counters.incr("filled", len(batch))
            if clock is not None:
                clock.release(DNS, batch.ts, len(batch))
    return filled


__all__ = ["ParseError", "fill_up_worker", "filter_valid_response", "parse_dns_line"]
