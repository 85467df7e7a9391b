"""Attribute network flows to service domains using passive DNS answers."""

from dnsflow.engine import Engine, EngineError, RunReport, StreamStats, replay_records
from dnsflow.flow_pipeline import resolve
from dnsflow.io import DirectorySink, MemorySink, StreamSource
from dnsflow.model import (
    CorrelatedRecord,
    DnsRecord,
    EngineConfig,
    FlowRecord,
    ParseError,
    RType,
    Variant,
)
from dnsflow.store import MapStore, label

__version__ = "0.1.0"

__all__ = [
    "CorrelatedRecord",
    "DirectorySink",
    "DnsRecord",
    "Engine",
    "EngineConfig",
    "EngineError",
    "FlowRecord",
    "MapStore",
    "MemorySink",
    "ParseError",
    "RType",
    "RunReport",
    "StreamSource",
    "StreamStats",
    "Variant",
    "label",
    "replay_records",
    "resolve",
]
