"""Record types shared by the pipelines, the store and the analyses.

All records are frozen dataclasses: they validate on construction and are
safe to pass between worker threads.
"""

from __future__ import annotations

import enum
import ipaddress
import json
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from typing import Any, Optional


class ParseError(ValueError):
    """A malformed input line. ``lineno`` is 1-based when known."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class RType(str, enum.Enum):
    A = "A"
    AAAA = "AAAA"
    CNAME = "CNAME"
    OTHER = "OTHER"

    @classmethod
    def parse(cls, text: str) -> "RType":
        try:
            return cls(text.upper())
        except ValueError:
            raise ParseError(f"bad rtype {text!r}") from None


class Variant(str, enum.Enum):
    """Engine behaviours; everything but MAIN switches off one mechanism."""

    MAIN = "main"
    NO_SPLIT = "no-split"
    NO_CLEAR_UP = "no-clear-up"
    NO_ROTATION = "no-rotation"
    NO_LONG_MAPS = "no-long-maps"
    EXACT_TTL = "exact-ttl"

    @classmethod
    def parse(cls, text: "str | Variant") -> "Variant":
        if isinstance(text, Variant):
            return text
        key = text.strip().lower().replace("_", "-")
        aliases = {
            "nosplit": "no-split",
            "noclearup": "no-clear-up",
            "no-clearup": "no-clear-up",
            "norotation": "no-rotation",
            "nolongmaps": "no-long-maps",
            "exactttl": "exact-ttl",
        }
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            names = ", ".join(v.value for v in cls)
            raise ValueError(f"unknown variant {text!r} (expected one of {names})") from None


def normalize_name(name: str) -> str:
    """Lowercase a domain name and strip one trailing dot."""
    name = name.strip().lower()
    if name.endswith("."):
        name = name[:-1]
    return name


@lru_cache(maxsize=1 << 16)
def normalize_ip(text: str) -> str:
    """Canonical text of an IPv4/IPv6 address; raises ValueError otherwise."""
    return ipaddress.ip_address(text.strip()).compressed


def ip_version(text: str) -> Optional[int]:
    try:
        return ipaddress.ip_address(text).version
    except ValueError:
        return None


@dataclass(frozen=True, slots=True)
class DnsRecord:
    """One DNS answer. ``answer`` is an address for A/AAAA, a name for CNAME.

    A/AAAA answers are canonicalised when they parse as an address and kept
    verbatim otherwise; the response filter rejects the latter, so that
    such records are counted as filtered rather than as parse errors.
    """

    ts: int
    rtype: RType
    qname: str
    ttl: int
    answer: str

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        if not isinstance(self.rtype, RType):
            set_(self, "rtype", RType.parse(str(self.rtype)))
        if int(self.ts) < 0:
            raise ValueError(f"negative timestamp {self.ts}")
        if int(self.ttl) < 0:
            raise ValueError(f"negative ttl {self.ttl}")
        set_(self, "ts", int(self.ts))
        set_(self, "ttl", int(self.ttl))
        qname = normalize_name(self.qname)
        if not qname:
            raise ValueError("empty qname")
        set_(self, "qname", qname)
        answer = self.answer.strip()
        if self.rtype in (RType.A, RType.AAAA):
            try:
                answer = normalize_ip(answer)
            except ValueError:
                pass
        elif self.rtype is RType.CNAME:
            answer = normalize_name(answer)
        if not answer:
            raise ValueError("empty answer")
        set_(self, "answer", answer)

    def to_line(self) -> str:
        return f"{self.ts}\t{self.rtype.value}\t{self.qname}\t{self.ttl}\t{self.answer}"

    @classmethod
    def from_line(cls, line: str, lineno: Optional[int] = None) -> "DnsRecord":
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", lineno)
        ts, rtype, qname, ttl, answer = parts
        try:
            return cls(int(ts), RType.parse(rtype), qname, int(ttl), answer)
        except ParseError as exc:
            raise ParseError(str(exc), lineno) from None
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None


@dataclass(frozen=True, slots=True)
class FlowRecord:
    ts: int
    src_ip: str
    dst_ip: str
    proto: int
    src_port: int
    dst_port: int
    packets: int
    bytes: int

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        if self.ts < 0:
            raise ValueError(f"negative timestamp {self.ts}")
        set_(self, "src_ip", normalize_ip(self.src_ip))
        set_(self, "dst_ip", normalize_ip(self.dst_ip))
        if not 0 <= self.proto <= 255:
            raise ValueError(f"protocol out of range: {self.proto}")
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port out of range: {port}")
        if self.packets < 1:
            raise ValueError(f"packets must be >= 1, got {self.packets}")
        if self.bytes < 1:
            raise ValueError(f"bytes must be >= 1, got {self.bytes}")

    @property
    def identity(self) -> tuple[int, str, str, int, int]:
        """Key used to match a flow against generated ground truth."""
        return (self.ts, self.src_ip, self.dst_ip, self.src_port, self.dst_port)

    def to_line(self) -> str:
        return (
            f"{self.ts}\t{self.src_ip}\t{self.dst_ip}\t{self.proto}\t"
            f"{self.src_port}\t{self.dst_port}\t{self.packets}\t{self.bytes}"
        )

    @classmethod
    def from_line(cls, line: str, lineno: Optional[int] = None) -> "FlowRecord":
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 8:
            raise ParseError(f"expected 8 fields, got {len(parts)}", lineno)
        try:
            ts, proto, sport, dport, pkts, nbytes = (
                int(parts[i]) for i in (0, 3, 4, 5, 6, 7)
            )
            return cls(ts, parts[1], parts[2], proto, sport, dport, pkts, nbytes)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None


@dataclass(frozen=True, slots=True)
class CorrelatedRecord:
    """A flow joined with the names found for its address.

    ``chain`` starts with the A/AAAA name and follows every CNAME hop;
    ``result`` is its last element, or None when nothing was found.
    """

    flow: FlowRecord
    chain: tuple[str, ...] = ()
    result: Optional[str] = None

    def __post_init__(self) -> None:
        if not isinstance(self.chain, tuple):
            object.__setattr__(self, "chain", tuple(self.chain))
        if not self.chain:
            if self.result is not None:
                raise ValueError("result without a chain")
        elif self.result != self.chain[-1]:
            raise ValueError("result must equal the last chain element")

    @classmethod
    def of(cls, flow: FlowRecord, chain: "list[str] | tuple[str, ...]") -> "CorrelatedRecord":
        chain = tuple(chain)
        return cls(flow, chain, chain[-1] if chain else None)

    @property
    def correlated(self) -> bool:
        return self.result is not None

    def to_line(self) -> str:
        f = self.flow
        return (
            f"{f.ts}\t{f.src_ip}\t{f.dst_ip}\t{f.bytes}\t{f.packets}\t"
            f"{self.result or ''}\t{';'.join(self.chain)}\t"
            f"{f.proto}\t{f.src_port}\t{f.dst_port}"
        )

    @classmethod
    def from_line(cls, line: str, lineno: Optional[int] = None) -> "CorrelatedRecord":
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) not in (7, 10):
            raise ParseError(f"expected 7 or 10 fields, got {len(parts)}", lineno)
        try:
            ts, nbytes, pkts = int(parts[0]), int(parts[3]), int(parts[4])
            proto, sport, dport = (int(x) for x in parts[7:10]) if len(parts) == 10 else (0, 0, 0)
            flow = FlowRecord(ts, parts[1], parts[2], proto, sport, dport, pkts, nbytes)
            chain = tuple(parts[6].split(";")) if parts[6] else ()
            result = parts[5] or None
            return cls(flow, chain, result)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None


@dataclass(frozen=True)
class EngineConfig:
    """Every engine tunable. Defaults follow the deployed system."""

    a_clear_up_interval: int = 3600
    c_clear_up_interval: int = 7200
    num_split: int = 10
    chain_limit: int = 6
    long_clear_up_interval: Optional[int] = None
    variant: Variant = Variant.MAIN
    queue_capacity: int = 200_000
    buffer_capacity: int = 200_000
    fill_workers: int = 2
    lookup_workers: int = 4
    write_workers: int = 2
    use_dst_ip: bool = False
    # live semantics: full queues drop instead of blocking the reader
    drop_when_full: bool = False
    batch_size: int = 1024
    flush_records: int = 1000
    flush_seconds: int = 1
    roll_interval: int = 3600
    sample_interval: int = 60

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.variant is Variant.NO_SPLIT:
            object.__setattr__(self, "num_split", 1)
        for name in (
            "a_clear_up_interval", "c_clear_up_interval", "num_split", "chain_limit",
            "queue_capacity", "buffer_capacity", "fill_workers", "lookup_workers",
            "write_workers", "batch_size", "flush_records", "flush_seconds",
            "roll_interval", "sample_interval",
        ):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.long_clear_up_interval is not None and self.long_clear_up_interval < 1:
            raise ValueError("long_clear_up_interval must be positive or None")

    def with_(self, **changes: Any) -> "EngineConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EngineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EngineConfig":
        return cls.from_dict(json.loads(text))


__all__ = [
    "CorrelatedRecord",
    "DnsRecord",
    "EngineConfig",
    "FlowRecord",
    "ParseError",
    "RType",
    "Variant",
    "ip_version",
    "normalize_ip",
    "normalize_name",
]
