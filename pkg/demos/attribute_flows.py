"""Attribute a handful of flows to domains, one step at a time.

Run with ``python3 demos/attribute_flows.py``.
"""

from dnsflow import DnsRecord, EngineConfig, FlowRecord, MapStore, RType, replay_records

# A resolver answers www.shop.example through a CDN alias.
dns = [
    DnsRecord(100, RType.A, "edge7.cdn.example", 300, "198.51.100.7"),
    DnsRecord(100, RType.CNAME, "www.shop.example", 300, "edge7.cdn.example"),
    DnsRecord(130, RType.AAAA, "api.shop.example", 60, "2001:db8::42"),
]

# Server-side flows: the server address is the source.
flows = [
    FlowRecord(101, "198.51.100.7", "192.0.2.10", 6, 443, 50111, 12, 14_000),
    FlowRecord(131, "2001:db8::42", "192.0.2.11", 6, 443, 50222, 3, 900),
    FlowRecord(140, "203.0.113.99", "192.0.2.12", 17, 4500, 4500, 1, 120),
]

store = MapStore(EngineConfig())
for rec in replay_records(dns, flows, EngineConfig(), store):
    print(f"{rec.flow.src_ip:>15} -> {rec.result or '(no DNS seen)'}  chain={list(rec.chain)}")

# The store keeps per-tier counters that explain where each hit came from.
print({k: v for k, v in store.counters.snapshot().items() if v})
