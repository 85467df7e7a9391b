"""Flow side: parse flow lines and attribute each flow to a name chain."""

from __future__ import annotations

from typing import Optional

from dnsflow.clock import FLOW, ReplayClock
from dnsflow.counters import Counters
from dnsflow.model import CorrelatedRecord, EngineConfig, FlowRecord
from dnsflow.queues import Batch, BoundedQueue
from dnsflow.store import MapStore


def parse_flow_line(line: str, lineno: Optional[int] = None) -> FlowRecord:
    """``ts srcIP dstIP proto srcPort dstPort packets bytes``, tab separated."""
    return FlowRecord.from_line(line, lineno)


def resolve(
    store: MapStore, flow: FlowRecord, cfg: Optional[EngineConfig] = None
) -> CorrelatedRecord:
    """Look the flow's address up, then walk CNAME links back to the service.

    The walk stops on a miss, on a self-referencing link, on a memoised
    link (its target is already final), or after ``chain_limit`` hops (which
    also breaks cycles). A walk of two or more hops is memoised so the head
    resolves to the same result in one lookup next time.
    """
    cfg = cfg or store.config
    key = flow.dst_ip if cfg.use_dst_ip else flow.src_ip
    now = flow.ts
    name = store.lookup_ip(key, now)
    if name is None:
        return CorrelatedRecord(flow)
    chain = [name]
    current = name
    hops = 0
    expiry = None
    lookup = store.lookup_cname_entry
    while hops < cfg.chain_limit:
        hit = lookup(current, now)
        if hit is None:
            break
        nxt, exp, memo = hit
        if exp is not None and (expiry is None or exp < expiry):
            expiry = exp
        chain.append(nxt)
        hops += 1
        if memo or nxt == current:
            break
        current = nxt
    if hops:
        store.counters.incr("cname_hops", hops)
    if hops >= 2:
        store.memoize_chain(chain[0], chain[-1], expiry)
    return CorrelatedRecord(flow, tuple(chain), chain[-1])


def look_up_worker(
    queue: BoundedQueue,
    store: MapStore,
    out: BoundedQueue,
    cfg: Optional[EngineConfig] = None,
    clock: Optional[ReplayClock] = None,
    counters: Optional[Counters] = None,
) -> int:
    """Resolve every flow from ``queue`` onto ``out``; returns flows handled.

    Uncorrelated flows are emitted too, with an empty chain.
    """
    cfg = cfg or store.config
    handled = 0
    while True:
        batch = queue.get_batch()
        if batch is None:
            break
        try:
            results = Batch((resolve(store, f, cfg) for f in batch), ts=getattr(batch, "ts", 0))
        finally:
            if clock is not None:
                clock.release(FLOW, batch.ts, len(batch))
        if counters is not None:
            total = correlated = 0
            for rec in results:
                b = rec.flow.bytes
                total += b
                if rec.chain:
                    correlated += b
                    counters.incr(f"chain_{len(rec.chain) - 1}")
            counters.incr("emitted", len(results))
            counters.incr("total_bytes", total)
            counters.incr("correlated_bytes", correlated)
        out.put_batch(results)
        handled += len(results)
    return handled


__all__ = ["look_up_worker", "parse_flow_line", "resolve"]
