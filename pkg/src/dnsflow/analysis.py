"""Domain hygiene and coverage analyses over correlated output."""

from __future__ import annotations

import csv
import enum
import io
import os
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Union

import numpy as np

from dnsflow.model import CorrelatedRecord, FlowRecord, normalize_ip, normalize_name

DNS_PORTS = frozenset({53, 853})

UNCORRELATED = "uncorrelated"
INVALID = "invalid"
OK = "ok"


class Violation(str, enum.Enum):
    TOO_LONG_255 = "TooLong255"
    LABEL_TOO_LONG_63 = "LabelTooLong63"
    BAD_LABEL_CHARS = "BadLabelChars"


@dataclass(frozen=True)
class ValidityReport:
    name: str
    violations: frozenset[Violation] = frozenset()

    @property
    def valid(self) -> bool:
        return not self.violations


_STRICT_LABEL = re.compile(r"[A-Za-z](?:[A-Za-z0-9-]*[A-Za-z0-9])?\Z")
_LENIENT_LABEL = re.compile(r"[A-Za-z0-9](?:[A-Za-z0-9-]*[A-Za-z0-9])?\Z")


def validate_domain(name: str, lenient: bool = False) -> ValidityReport:
    """Check the three host-name rules: at most 255 bytes in total, at most
    63 bytes per label, and labels made of letters, digits and inner hyphens
    that start with a letter (or a digit, when ``lenient``) and do not end
    with a hyphen. Lengths are measured on the UTF-8 encoding.
    """
    text = name[:-1] if name.endswith(".") else name
    found: set[Violation] = set()
    if not text:
        return ValidityReport(name, frozenset({Violation.BAD_LABEL_CHARS}))
    if len(text.encode("utf-8")) > 255:
        found.add(Violation.TOO_LONG_255)
    pattern = _LENIENT_LABEL if lenient else _STRICT_LABEL
    for lab in text.split("."):
        if len(lab.encode("utf-8")) > 63:
            found.add(Violation.LABEL_TOO_LONG_63)
        if not lab.isascii() or pattern.match(lab) is None:
            found.add(Violation.BAD_LABEL_CHARS)
    return ValidityReport(name, frozenset(found))


@dataclass
class Blocklist:
    """Domain -> category, matched on label boundaries."""

    entries: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.entries = {normalize_name(k): v for k, v in self.entries.items()}

    @classmethod
    def load(cls, path: "str | os.PathLike[str]") -> "Blocklist":
        """Read ``domain<TAB>category`` lines; ``#`` starts a comment."""
        entries: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split("\t") if "\t" in line else line.split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'domain<TAB>category'")
                entries[parts[0]] = parts[1]
        return cls(entries)

    def match(self, name: str) -> Optional[str]:
        return match_blocklist(name, self)


def match_blocklist(name: str, bl: Blocklist) -> Optional[str]:
    """Category of the longest listed suffix of ``name``, or None."""
    labels = normalize_name(name).split(".")
    entries = bl.entries
    for i in range(len(labels)):
        hit = entries.get(".".join(labels[i:]))
        if hit is not None:
            return hit
    return None


def cdf_points(values: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    """Values sorted descending and their cumulative share of the total."""
    arr = np.sort(np.fromiter(values, dtype=np.int64))[::-1]
    total = arr.sum()
    if total == 0:
        return arr, np.zeros(len(arr))
    return arr, np.cumsum(arr) / total


@dataclass
class TrafficReport:
    domain_bytes: Counter
    category_bytes: Counter
    category_domains: dict[str, Counter]
    total_bytes: int
    correlated_bytes: int

    @property
    def correlation_rate(self) -> float:
        return self.correlated_bytes / self.total_bytes if self.total_bytes else 0.0

    def cdf(self, category: str) -> list[tuple[int, str, int, float]]:
        """(rank, domain, bytes, cumulative fraction), heaviest domain first."""
        counts = self.category_domains.get(category, Counter())
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        _, fractions = cdf_points(b for _, b in ranked)
        return [
            (rank, dom, b, float(frac))
            for rank, ((dom, b), frac) in enumerate(zip(ranked, fractions), 1)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["category", "rank", "domain", "bytes", "cumulative_fraction"])
        for category in sorted(self.category_domains):
            for rank, dom, b, frac in self.cdf(category):
                w.writerow([category, rank, dom, b, f"{frac:.6f}"])
        return buf.getvalue()


def classify(result: Optional[str], bl: Optional[Blocklist], lenient: bool = False) -> str:
    """Traffic category of a result: uncorrelated, a blocklist category,
    invalid, or ok, checked in that order."""
    if result is None:
        return UNCORRELATED
    if bl is not None:
        hit = match_blocklist(result, bl)
        if hit is not None:
            return hit
    if not validate_domain(result, lenient).valid:
        return INVALID
    return OK


def aggregate_traffic(
    records: Iterable[CorrelatedRecord],
    bl: Optional[Blocklist] = None,
    lenient: bool = False,
) -> TrafficReport:
    domain_bytes: Counter = Counter()
    category_bytes: Counter = Counter()
    category_domains: dict[str, Counter] = defaultdict(Counter)
    total = correlated = 0
    cache: dict[Optional[str], str] = {}
    for rec in records:
        b = rec.flow.bytes
        total += b
        result = rec.result
        cat = cache.get(result)
        if cat is None:
            cat = cache[result] = classify(result, bl, lenient)
        category_bytes[cat] += b
        if result is not None:
            correlated += b
            domain_bytes[result] += b
            category_domains[cat][result] += b
    return TrafficReport(domain_bytes, category_bytes, dict(category_domains), total, correlated)


class UndefinedRatioError(ValueError):
    pass


@dataclass(frozen=True)
class CoverageResult:
    dns_flows: int
    public_flows: int

    @property
    def public_fraction(self) -> float:
        return self.public_flows / self.dns_flows

    @property
    def coverage(self) -> float:
        return 1.0 - self.public_fraction


def load_resolvers(path: "str | os.PathLike[str]") -> set[str]:
    """One address per line; blank lines and ``#`` comments ignored."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                out.add(normalize_ip(line))
    return out


def resolver_coverage(flows: Iterable[FlowRecord], resolvers: Iterable[str]) -> CoverageResult:
    """Share of DNS/DoT flows (dst port 53 or 853) sent to listed resolvers."""
    listed = {normalize_ip(r) for r in resolvers}
    dns = public = 0
    for f in flows:
        if f.dst_port in DNS_PORTS:
            dns += 1
            if f.dst_ip in listed:
                public += 1
    if dns == 0:
        raise UndefinedRatioError("no flows to port 53 or 853")
    return CoverageResult(dns, public)


@dataclass(frozen=True)
class BidirectionalReport:
    clients: int
    replying_clients: int
    malformed_domains: int
    answered_domains: int
    bidirectional_packets: int
    malformed_packets: int

    @property
    def client_fraction(self) -> float:
        return self.replying_clients / self.clients if self.clients else 0.0

    @property
    def domain_fraction(self) -> float:
        return self.answered_domains / self.malformed_domains if self.malformed_domains else 0.0

    @property
    def packet_share(self) -> float:
        return self.bidirectional_packets / self.malformed_packets if self.malformed_packets else 0.0


Validity = Union[Mapping[str, bool], Callable[[str], bool], None]


def bidirectional_report(
    records: Iterable[CorrelatedRecord], validity: Validity = None, lenient: bool = False
) -> BidirectionalReport:
    """How clients answer traffic attributed to malformed domains.

    An inbound flow is one whose result is malformed; its source is the
    remote and its destination the client. A reverse flow goes from that
    client back to that remote. Reported: the share of such clients that
    reply, the share of malformed domains that get a reply, and the share of
    packets (inbound plus reverse) that belong to answered exchanges.
    ``validity`` maps a domain to True when it is well formed; by default
    the three host-name rules decide.
    """
    if validity is None:
        memo: dict[str, bool] = {}

        def is_valid(name: str) -> bool:
            v = memo.get(name)
            if v is None:
                v = memo[name] = validate_domain(name, lenient).valid
            return v
    elif callable(validity):
        is_valid = validity
    else:
        table = validity

        def is_valid(name: str) -> bool:
            return table.get(name, True)

    inbound: dict[tuple[str, str], list[FlowRecord]] = defaultdict(list)
    inbound_domains: dict[tuple[str, str], set[str]] = defaultdict(set)
    by_pair: dict[tuple[str, str], list[FlowRecord]] = defaultdict(list)
    malformed: set[str] = set()
    for rec in records:
        f = rec.flow
        by_pair[(f.src_ip, f.dst_ip)].append(f)
        if rec.result is not None and not is_valid(rec.result):
            pair = (f.src_ip, f.dst_ip)
            inbound[pair].append(f)
            inbound_domains[pair].add(rec.result)
            malformed.add(rec.result)

    clients = {client for _, client in inbound}
    replying: set[str] = set()
    answered: set[str] = set()
    bidir_packets = 0
    total_packets = 0
    for (remote, client), flows in inbound.items():
        in_packets = sum(f.packets for f in flows)
        reverse = by_pair.get((client, remote), ())
        back_packets = sum(f.packets for f in reverse)
        total_packets += in_packets + back_packets
        if reverse:
            replying.add(client)
            answered.update(inbound_domains[(remote, client)])
            bidir_packets += in_packets + back_packets
    return BidirectionalReport(
        clients=len(clients),
        replying_clients=len(replying),
        malformed_domains=len(malformed),
        answered_domains=len(answered),
        bidirectional_packets=bidir_packets,
        malformed_packets=total_packets,
    )
