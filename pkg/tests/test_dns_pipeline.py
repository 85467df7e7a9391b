import threading

import pytest

from conftest import a_rec, cname_rec
from dnsflow.clock import DNS, FLOW, ReplayClock
from dnsflow.dns_pipeline import fill_up_worker, filter_valid_response, parse_dns_line
from dnsflow.model import DnsRecord, EngineConfig, ParseError, RType
from dnsflow.queues import Batch, BoundedQueue, FillUpQueue, QueueClosed
from dnsflow.store import MapStore


def test_parse_examples():
    assert parse_dns_line("1000\tA\tedge.cdn.net\t60\t10.0.0.1") == DnsRecord(
        1000, RType.A, "edge.cdn.net", 60, "10.0.0.1"
    )
    assert parse_dns_line("1000\tCNAME\twww.svc.com\t300\tedge.cdn.net").rtype is RType.CNAME
    with pytest.raises(ParseError):
        parse_dns_line("1000\tA\tx", 3)


@pytest.mark.parametrize(
    "rec, ok",
    [
        (DnsRecord(0, RType.A, "x", 1, "10.0.0.1"), True),
        (DnsRecord(0, RType.A, "x", 1, "not-an-ip"), False),
        (DnsRecord(0, RType.AAAA, "x", 1, "10.0.0.1"), False),
        (DnsRecord(0, RType.A, "x", 1, "2001:db8::1"), False),
        (DnsRecord(0, RType.AAAA, "x", 1, "2001:db8::1"), True),
        (DnsRecord(0, RType.CNAME, "x", 1, "edge.cdn.net"), True),
        (DnsRecord(0, RType.CNAME, "x", 1, "10.0.0.1"), False),
        (DnsRecord(0, RType.OTHER, "x", 1, "whatever"), False),
    ],
)
def test_filter(rec, ok):
    assert filter_valid_response(rec) is ok


def run_workers(records, workers, capacity=100_000):
    store = MapStore(EngineConfig(a_clear_up_interval=10**9))
    q = FillUpQueue(capacity)
    threads = [threading.Thread(target=fill_up_worker, args=(q, store)) for _ in range(workers)]
    for t in threads:
        t.start()
    for i in range(0, len(records), 100):
        q.put_batch(Batch(records[i:i + 100]))
    q.close()
    for t in threads:
        t.join()
    return store


def test_single_worker_three_records():
    recs = [a_rec(0, "a", "10.0.0.1"), a_rec(0, "b", "10.0.0.2"), cname_rec(0, "c", "a")]
    assert run_workers(recs, 1).entry_count() == 3


def test_four_workers_distinct_keys():
    recs = [a_rec(i // 100, f"n{i}", f"10.{i >> 16}.{(i >> 8) & 255}.{i & 255}") for i in range(10_000)]
    multi = run_workers(recs, 4)
    single = run_workers(recs, 1)
    assert multi.entry_count() == 10_000
    assert multi.triples() == single.triples()


def test_burst_drops_on_small_queue():
    q = FillUpQueue(10)
    for i in range(1000):
        q.offer(a_rec(0, "n", "10.0.0.1"))
    assert q.drops == 990 and len(q) == 10


def test_offer_batch_partial():
    q = BoundedQueue(5)
    assert q.offer_batch(Batch(range(3), ts=7)) == 0
    assert q.offer_batch(Batch(range(4), ts=8)) == 2
    assert q.drops == 2 and q.enqueued == 5
    first, second = q.get_batch(), q.get_batch()
    assert list(second) == [0, 1] and second.ts == 8 and len(first) == 3


def test_queue_fifo_and_close():
    q = BoundedQueue(100)
    for i in range(5):
        q.put(i)
    q.close()
    assert [q.get() for _ in range(5)] == list(range(5))
    assert q.get_batch() is None
    with pytest.raises(QueueClosed):
        q.put(1)


def test_put_blocks_until_room():
    q = BoundedQueue(2)
    q.put_batch([1, 2])
    done = threading.Event()

    def producer():
        q.put_batch([3])
        done.set()

    t = threading.Thread(target=producer)
    t.start()
    assert not done.wait(0.1)
    q.get_batch()
    assert done.wait(2)
    t.join()


def test_put_timeout():
    q = BoundedQueue(1)
    q.put(1)
    with pytest.raises(TimeoutError):
        q.put(2, timeout=0.05)


def test_clock_orders_dns_before_flows_at_same_ts():
    clock = ReplayClock()
    d, f = clock.register(DNS), clock.register(FLOW)
    order = []
    lock = threading.Lock()

    def dns_side():
        for ts in (1, 5, 9):
            clock.advance(DNS, d, ts)
            clock.acquire(DNS, d, ts, 1)
            with lock:
                order.append(("dns", ts))
            clock.release(DNS, ts, 1)
        clock.finish(DNS, d)

    def flow_side():
        for ts in (1, 5, 9):
            clock.advance(FLOW, f, ts)
            clock.acquire(FLOW, f, ts, 1)
            with lock:
                order.append(("flow", ts))
            clock.release(FLOW, ts, 1)
        clock.finish(FLOW, f)

    threads = [threading.Thread(target=flow_side), threading.Thread(target=dns_side)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(5)
    assert order == [(k, ts) for ts in (1, 5, 9) for k in ("dns", "flow")]
