from __future__ import annotations

import pytest

from dnsflow.model import DnsRecord, FlowRecord, RType

# acceptance results collected for the terminal summary
ACCEPTANCE_LINES: list[str] = []


def a_rec(ts: int, name: str, ip: str, ttl: int = 60) -> DnsRecord:
    rtype = RType.AAAA if ":" in ip else RType.A
    return DnsRecord(ts, rtype, name, ttl, ip)


def cname_rec(ts: int, alias: str, target: str, ttl: int = 60) -> DnsRecord:
    """``alias`` CNAME ``target``: the store maps target -> alias."""
    return DnsRecord(ts, RType.CNAME, alias, ttl, target)


def flow(ts: int, src: str, dst: str = "192.0.2.9", nbytes: int = 1000, sport: int = 443,
         dport: int = 51000, packets: int = 10) -> FlowRecord:
    return FlowRecord(ts, src, dst, 6, sport, dport, packets, nbytes)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def chain_store():
    """Store with 10.0.0.1 -> edge.cdn.net -> www.svc.com."""
    from dnsflow.store import MapStore

    store = MapStore()
    store.fill(a_rec(0, "edge.cdn.net", "10.0.0.1"))
    store.fill(cname_rec(0, "www.svc.com", "edge.cdn.net"))
    return store
