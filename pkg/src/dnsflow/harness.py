"""Synthetic workloads with ground truth, accuracy scoring and benchmarks.

Services are modelled as a CNAME chain ending in an A/AAAA answer::

    www.service3.com -> edge1-svc3.cdn.net -> 10.0.0.4

A *resolution* emits that chain's DNS answers at one timestamp; flows from
the service's address follow it after a configurable lag. The ground truth
of a flow is the service's first name.
"""

from __future__ import annotations

import bisect
import os
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from dnsflow.engine import Engine, RunReport
from dnsflow.io import MemorySink, OutputSink, StreamSource, iter_output
from dnsflow.model import CorrelatedRecord, DnsRecord, EngineConfig, FlowRecord, RType, Variant

# Roughly 70% of answers at or under 300 s and 99% at or under 3600 s.
DEFAULT_TTLS: dict[int, float] = {
    20: 0.20, 60: 0.25, 300: 0.25, 900: 0.15, 1800: 0.08, 3600: 0.06, 86400: 0.01,
}
DEFAULT_DEPTHS: dict[int, float] = {0: 0.3, 1: 0.45, 2: 0.15, 3: 0.07, 4: 0.03}

Identity = tuple[int, str, str, int, int]
Distribution = Union[int, Mapping[int, float]]


def _choices(dist: Distribution) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dist, int):
        return np.array([dist]), np.array([1.0])
    values = np.array(sorted(dist), dtype=np.int64)
    weights = np.array([dist[v] for v in sorted(dist)], dtype=float)
    return values, weights / weights.sum()


@dataclass(frozen=True)
class WorkloadSpec:
    """Shape of a generated workload.

    ``dns_rate`` is resolutions per second (each emits ``1 + depth`` records)
    and ``flow_rate`` flows per second; in ``random`` mode both are Poisson
    means. ``browse`` mode mirrors a two-site browsing capture: every service
    resolves once, one second apart, then ``flow_rate`` flows per second are
    spread round-robin over the services for ``duration_seconds``.
    """

    duration_seconds: int = 600
    dns_rate: float = 1.0
    flow_rate: float = 10.0
    num_services: int = 10
    cname_depth: Distribution = field(default_factory=lambda: dict(DEFAULT_DEPTHS))
    ttl: Distribution = field(default_factory=lambda: dict(DEFAULT_TTLS))
    ip_sharing: str = "disjoint"
    flow_lag: tuple[int, int] = (0, 60)
    mode: str = "random"
    aaaa_fraction: float = 0.0
    start_ts: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dns_rate < 0 or self.flow_rate < 0:
            raise ValueError("rates must be non-negative")
        if self.num_services < 1 or self.duration_seconds < 0:
            raise ValueError("need at least one service and a non-negative duration")
        if self.ip_sharing not in ("disjoint", "shared"):
            raise ValueError("ip_sharing must be 'disjoint' or 'shared'")
        if self.mode not in ("random", "browse"):
            raise ValueError("mode must be 'random' or 'browse'")
        lo, hi = self.flow_lag
        if not 0 <= lo <= hi:
            raise ValueError("flow_lag must satisfy 0 <= min <= max")


@dataclass
class Service:
    domain: str
    names: list[str]
    ip: str


@dataclass
class Workload:
    spec: WorkloadSpec
    services: list[Service]
    dns_lines: list[str]
    flow_lines: list[str]
    truth: dict[Identity, str]

    def dns_records(self) -> list[DnsRecord]:
        return [DnsRecord.from_line(x) for x in self.dns_lines]

    def flow_records(self) -> list[FlowRecord]:
        return [FlowRecord.from_line(x) for x in self.flow_lines]

    def write(self, directory: "str | os.PathLike[str]") -> dict[str, Path]:
        """Write dns.tsv, flows.tsv and truth.tsv; returns their paths."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"dns": d / "dns.tsv", "flows": d / "flows.tsv", "truth": d / "truth.tsv"}
        _write_lines(paths["dns"], self.dns_lines)
        _write_lines(paths["flows"], self.flow_lines)
        _write_lines(paths["truth"], ("\t".join(map(str, k + (v,))) for k, v in self.truth.items()))
        return paths


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def load_truth(path: "str | os.PathLike[str]") -> dict[Identity, str]:
    truth: dict[Identity, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            ts, src, dst, sport, dport, domain = line.rstrip("\n").split("\t")
            truth[(int(ts), src, dst, int(sport), int(dport))] = domain
    return truth


def _services(spec: WorkloadSpec, rng: np.random.Generator) -> list[Service]:
    depths, depth_p = _choices(spec.cname_depth)
    out = []
    for i in range(spec.num_services):
        depth = int(rng.choice(depths, p=depth_p))
        domain = f"www.service{i}.com"
        names = [domain] + [f"edge{k}-svc{i}.cdn.net" for k in range(1, depth + 1)]
        n = 0 if spec.ip_sharing == "shared" else i
        if rng.random() < spec.aaaa_fraction:
            ip = f"2001:db8::{n + 1:x}"
        else:
            ip = f"10.{(n + 1) >> 16 & 255}.{(n + 1) >> 8 & 255}.{(n + 1) & 255}"
        out.append(Service(domain, names, ip))
    return out


def _resolution_lines(svc: Service, ts: int, ttls: Sequence[int]) -> list[str]:
    lines = [
        f"{ts}\tCNAME\t{svc.names[k]}\t{ttls[k]}\t{svc.names[k + 1]}"
        for k in range(len(svc.names) - 1)
    ]
    rtype = "AAAA" if ":" in svc.ip else "A"
    lines.append(f"{ts}\t{rtype}\t{svc.names[-1]}\t{ttls[-1]}\t{svc.ip}")
    return lines


def generate_workload(spec: WorkloadSpec, with_truth: bool = True) -> Workload:
    """Deterministic under ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    services = _services(spec, rng)
    ttl_values, ttl_p = _choices(spec.ttl)

    def ttls(n: int) -> list[int]:
        return [int(x) for x in rng.choice(ttl_values, size=n, p=ttl_p)]

    dns_lines: list[str] = []
    session_ts: list[int] = []
    session_svc: list[int] = []
    t0 = spec.start_ts
    if spec.mode == "browse":
        for i, svc in enumerate(services):
            dns_lines += _resolution_lines(svc, t0 + i, ttls(len(svc.names)))
        flow_start = t0 + len(services)
    else:
        counts = rng.poisson(spec.dns_rate, size=spec.duration_seconds)
        for dt, n in enumerate(counts):
            for _ in range(int(n)):
                i = int(rng.integers(len(services)))
                svc = services[i]
                dns_lines += _resolution_lines(svc, t0 + dt, ttls(len(svc.names)))
                session_ts.append(t0 + dt)
                session_svc.append(i)
        flow_start = t0

    flow_lines: list[str] = []
    truth: dict[Identity, str] = {}
    lag_lo, lag_hi = spec.flow_lag
    if spec.mode == "browse":
        per_second = [int(round(spec.flow_rate))] * spec.duration_seconds
    else:
        per_second = rng.poisson(spec.flow_rate, size=spec.duration_seconds + lag_hi).tolist()
    seq = 0
    for dt, n in enumerate(per_second):
        n = int(n)
        ts = flow_start + dt
        if n == 0:
            continue
        if spec.mode == "browse":
            picks = [(seq + k) % len(services) for k in range(n)]
            seq += n
        else:
            lo = bisect.bisect_left(session_ts, ts - lag_hi)
            hi = bisect.bisect_right(session_ts, ts - lag_lo)
            if hi <= lo:
                continue
            picks = [session_svc[k] for k in rng.integers(lo, hi, size=n).tolist()]
        clients = rng.integers(1, 1 << 16, size=n).tolist()
        dports = rng.integers(1024, 65536, size=n).tolist()
        packets = rng.integers(1, 100, size=n).tolist()
        sizes = rng.integers(40, 1500, size=n).tolist()
        for k in range(n):
            svc = services[picks[k]]
            client = clients[k]
            dst = f"192.168.{client >> 8}.{client & 255}"
            dport = dports[k]
            if with_truth:
                while (ts, svc.ip, dst, 443, dport) in truth:
                    dport = int(rng.integers(1024, 65536))
                truth[(ts, svc.ip, dst, 443, dport)] = svc.domain
            flow_lines.append(
                f"{ts}\t{svc.ip}\t{dst}\t6\t443\t{dport}\t{packets[k]}\t{packets[k] * sizes[k]}"
            )
    return Workload(spec, services, dns_lines, flow_lines, truth)


def scenario_spec(number: int, flows_per_second: int = 10, duration: int = 60) -> WorkloadSpec:
    """The two browsing scenarios: 1 = distinct addresses, 2 = one shared address."""
    if number not in (1, 2):
        raise ValueError("scenario must be 1 or 2")
    return WorkloadSpec(
        mode="browse",
        num_services=2,
        ip_sharing="disjoint" if number == 1 else "shared",
        duration_seconds=duration,
        flow_rate=flows_per_second,
        cname_depth=1,
        ttl=300,
        seed=number,
    )


def rotation_gap_spec(interval: int, seed: int = 7, services: int = 400) -> WorkloadSpec:
    """Flows arriving between one and two rotation intervals after their DNS.

    Plain rotation still finds most of them in the inactive maps; clearing
    without a snapshot loses nearly all of them.
    """
    return WorkloadSpec(
        duration_seconds=6 * interval,
        dns_rate=2.0,
        flow_rate=20.0,
        num_services=services,
        cname_depth={0: 0.5, 1: 0.5},
        ttl=max(1, interval // 2),
        flow_lag=(interval + 1, 2 * interval - 1),
        seed=seed,
    )


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class AccuracyReport:
    flows: int
    correct: int
    in_chain: int
    by_result: dict[Optional[str], int]

    @property
    def accuracy(self) -> float:
        return self.correct / self.flows if self.flows else 1.0

    @property
    def chain_membership(self) -> float:
        return self.in_chain / self.flows if self.flows else 1.0


def evaluate_accuracy(
    output: "Iterable[CorrelatedRecord] | str | os.PathLike[str]",
    truth: Mapping[Identity, str],
) -> AccuracyReport:
    """Share of flows whose result is their true service domain."""
    records = iter_output(output) if isinstance(output, (str, os.PathLike)) else output
    flows = correct = in_chain = 0
    by_result: Counter = Counter()
    for rec in records:
        want = truth.get(rec.flow.identity)
        if want is None:
            raise EvaluationError(f"flow {rec.flow.identity} has no ground truth")
        flows += 1
        by_result[rec.result] += 1
        if rec.result == want:
            correct += 1
        if want in rec.chain:
            in_chain += 1
    return AccuracyReport(flows, correct, in_chain, dict(by_result))


@dataclass
class MetricsReport:
    variant: str
    correlation_rate: float
    flows: int
    drops: int
    peak_entries: int
    entry_samples: list[tuple[int, int]]
    throughput: float
    wall_seconds: float
    rotations: int
    memoizations: int
    memo_hits: int
    rss_peak_kb: int
    run: RunReport

    @property
    def entries_monotone(self) -> bool:
        counts = [n for _, n in self.entry_samples]
        return all(a <= b for a, b in zip(counts, counts[1:]))

    def to_text(self) -> str:
        d = asdict(self)
        d.pop("run")
        d.pop("entry_samples")
        d["entries_monotone"] = self.entries_monotone
        return "".join(f"{k}={v}\n" for k, v in d.items())


def run_workload(
    cfg: EngineConfig,
    workload: Workload,
    sink: Optional[OutputSink] = None,
) -> tuple[RunReport, OutputSink]:
    """Run the full engine over a workload held in memory."""
    sink = sink if sink is not None else MemorySink(
        flush_records=cfg.flush_records, flush_seconds=cfg.flush_seconds
    )
    engine = Engine(
        cfg,
        [StreamSource.from_lines(workload.dns_lines, buffer_capacity=cfg.buffer_capacity, name="dns")],
        [StreamSource.from_lines(workload.flow_lines, buffer_capacity=cfg.buffer_capacity, name="flows")],
        sink=sink,
    )
    return engine.run(), sink


def run_benchmark(
    cfg: EngineConfig,
    workload: "Workload | tuple[Sequence[str], Sequence[str]]",
    sink: Optional[OutputSink] = None,
) -> MetricsReport:
    """Run ``cfg.variant`` over a workload (or DNS/flow file paths)."""
    if isinstance(workload, Workload):
        report, _ = run_workload(cfg, workload, sink)
    else:
        dns_paths, flow_paths = workload
        engine = Engine(cfg, list(dns_paths), list(flow_paths), sink=sink)
        report = engine.run()
    c = report.store_counters
    wall = report.wall_seconds
    return MetricsReport(
        variant=cfg.variant.value,
        correlation_rate=report.correlation_rate,
        flows=report.emitted,
        drops=report.drops,
        peak_entries=report.peak_entries,
        entry_samples=report.entry_samples,
        throughput=report.emitted / wall if wall > 0 else 0.0,
        wall_seconds=wall,
        rotations=c.get("rotations_ip_name", 0) + c.get("rotations_name_cname", 0),
        memoizations=c.get("memoizations", 0),
        memo_hits=c.get("memo_hits", 0),
        rss_peak_kb=report.rss_peak_kb,
        run=report,
    )


@dataclass
class DistributionMetrics:
    chain_length_histogram: dict[int, int]
    ttl_values: np.ndarray
    ttl_cdf: np.ndarray
    names_per_ip: dict[int, int]
    names_per_ip_cdf: tuple[np.ndarray, np.ndarray]

    def to_csv(self) -> dict[str, str]:
        chain = "cname_hops,records\n" + "".join(
            f"{k},{v}\n" for k, v in sorted(self.chain_length_histogram.items())
        )
        ttl = "ttl,cumulative_fraction\n" + "".join(
            f"{int(v)},{c:.6f}\n" for v, c in zip(self.ttl_values, self.ttl_cdf)
        )
        xs, ys = self.names_per_ip_cdf
        names = "names,ips,cumulative_fraction\n" + "".join(
            f"{int(x)},{self.names_per_ip[int(x)]},{y:.6f}\n" for x, y in zip(xs, ys)
        )
        return {"chain_length.csv": chain, "ttl_cdf.csv": ttl, "names_per_ip.csv": names}


def step_cdf(values: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    """Distinct values ascending and the fraction of samples at or below each."""
    arr = np.fromiter(values, dtype=np.int64)
    if arr.size == 0:
        return arr, np.zeros(0)
    xs, counts = np.unique(arr, return_counts=True)
    return xs, np.cumsum(counts) / arr.size


def distribution_metrics(
    dns: Iterable[DnsRecord] = (),
    correlated: Iterable[CorrelatedRecord] = (),
    window: int = 300,
) -> DistributionMetrics:
    """CNAME hop histogram of correlated flows, TTL CDF of the DNS input and
    the number of names per address within tumbling ``window``-second slots."""
    hist: Counter = Counter()
    for rec in correlated:
        if rec.chain:
            hist[len(rec.chain) - 1] += 1
    ttls: list[int] = []
    names: dict[tuple[int, str], set[str]] = defaultdict(set)
    t0: Optional[int] = None
    for rec in dns:
        ttls.append(rec.ttl)
        if rec.rtype in (RType.A, RType.AAAA):
            if t0 is None:
                t0 = rec.ts
            names[((rec.ts - t0) // window, rec.answer)].add(rec.qname)
    per_ip = Counter(len(v) for v in names.values())
    ttl_x, ttl_y = step_cdf(ttls)
    return DistributionMetrics(
        chain_length_histogram=dict(sorted(hist.items())),
        ttl_values=ttl_x,
        ttl_cdf=ttl_y,
        names_per_ip=dict(sorted(per_ip.items())),
        names_per_ip_cdf=step_cdf(len(v) for v in names.values()),
    )


def compare_variants(
    workload: Workload,
    base: EngineConfig,
    variants: Sequence[Variant] = tuple(Variant),
) -> dict[Variant, MetricsReport]:
    return {v: run_benchmark(base.with_(variant=v), workload) for v in variants}
