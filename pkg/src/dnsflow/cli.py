"""Command line entry point: ``dnsflow <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Optional, Sequence

from dnsflow import analysis, harness
from dnsflow.engine import Engine, EngineError
from dnsflow.io import DirectorySink, StreamError, iter_output
from dnsflow.model import DnsRecord, EngineConfig, FlowRecord, Variant

# EngineConfig field -> (flag, help)
CONFIG_FLAGS: dict[str, tuple[str, str]] = {
    "a_clear_up_interval": ("--a-interval", "seconds between A/AAAA map rotations"),
    "c_clear_up_interval": ("--c-interval", "seconds between CNAME map rotations"),
    "num_split": ("--num-split", "shards per map"),
    "chain_limit": ("--chain-limit", "maximum CNAME hops per flow"),
    "long_clear_up_interval": ("--long-interval", "seconds between long-map clear-ups (default never)"),
    "variant": ("--variant", "engine variant: " + ", ".join(v.value for v in Variant)),
    "queue_capacity": ("--queue-cap", "records per pipeline queue"),
    "buffer_capacity": ("--buffer-cap", "lines per stream input buffer"),
    "fill_workers": ("--fill-workers", "fill-up workers per DNS stream"),
    "lookup_workers": ("--lookup-workers", "look-up workers per flow stream"),
    "write_workers": ("--write-workers", "writer threads"),
    "use_dst_ip": ("--use-dst-ip", "attribute flows by destination address"),
    "drop_when_full": ("--drop-when-full", "drop records on full queues instead of waiting"),
    "batch_size": ("--batch-size", "records per queue batch"),
    "flush_records": ("--flush-records", "flush output after this many records"),
    "flush_seconds": ("--flush-seconds", "flush output after this many logical seconds"),
    "roll_interval": ("--roll-interval", "logical seconds per output file"),
    "sample_interval": ("--sample-interval", "logical seconds between map-size samples"),
}
_BOOL_FIELDS = {"use_dst_ip", "drop_when_full"}


def add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("engine configuration")
    g.add_argument("--config", type=Path, help="JSON config file; flags override it")
    for f in fields(EngineConfig):
        flag, text = CONFIG_FLAGS[f.name]
        if f.name in _BOOL_FIELDS:
            g.add_argument(flag, dest=f.name, action="store_true", default=None, help=text)
        elif f.name == "variant":
            g.add_argument(flag, dest=f.name, default=None, help=text)
        else:
            g.add_argument(flag, dest=f.name, type=int, default=None, metavar="N", help=text)


def config_from_args(args: argparse.Namespace) -> EngineConfig:
    base: dict[str, Any] = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text())
        EngineConfig.from_dict(base)
    for f in fields(EngineConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            base[f.name] = value
    return EngineConfig.from_dict(base)


def config_to_argv(cfg: EngineConfig) -> list[str]:
    """Flags that reproduce ``cfg``."""
    argv: list[str] = []
    for f in fields(EngineConfig):
        flag = CONFIG_FLAGS[f.name][0]
        value = getattr(cfg, f.name)
        if f.name in _BOOL_FIELDS:
            if value:
                argv.append(flag)
        elif value is not None:
            argv += [flag, value.value if isinstance(value, Variant) else str(value)]
    return argv


def _read_lines(path: Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def cmd_run(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    if args.dump_config:
        print(cfg.to_json())
        return 0
    if not args.dns or not args.flows:
        args.parser.error("run needs at least one --dns and one --flows source")
    if not args.out:
        args.parser.error("run needs --out")
    sink = DirectorySink(
        args.out, roll_interval=cfg.roll_interval,
        flush_records=cfg.flush_records, flush_seconds=cfg.flush_seconds,
    )
    engine = Engine(cfg, args.dns, args.flows, sink=sink)
    signal.signal(signal.SIGINT, lambda *_: engine.stop())
    signal.signal(signal.SIGTERM, lambda *_: engine.stop())
    try:
        report = engine.run()
    except StreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        sys.stdout.write(exc.report.to_text())
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(report.to_text())
    if args.report:
        Path(args.report).write_text(report.to_text())
    for err in report.errors:
        print(f"warning: {err}", file=sys.stderr)
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    if args.scenario in ("1", "2"):
        spec = harness.scenario_spec(int(args.scenario))
    elif args.scenario == "rotation-gap":
        spec = harness.rotation_gap_spec(args.interval, seed=args.seed)
    else:
        spec = harness.WorkloadSpec(
            duration_seconds=args.duration,
            dns_rate=args.dns_rate,
            flow_rate=args.flow_rate,
            num_services=args.services,
            cname_depth=args.depth if args.depth is not None else dict(harness.DEFAULT_DEPTHS),
            ttl=args.ttl if args.ttl is not None else dict(harness.DEFAULT_TTLS),
            ip_sharing=args.ip_sharing,
            flow_lag=(args.lag_min, args.lag_max),
            mode=args.mode,
            aaaa_fraction=args.aaaa_fraction,
            seed=args.seed,
        )
    w = harness.generate_workload(spec)
    paths = w.write(args.out)
    for kind, path in paths.items():
        print(f"{kind}={path}")
    print(f"dns_records={len(w.dns_lines)}\nflows={len(w.flow_lines)}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    base = config_from_args(args)
    variants = [Variant.parse(v) for v in args.variants.split(",")] if args.variants else [base.variant]
    out = Path(args.out) if args.out else None
    for v in variants:
        cfg = base.with_(variant=v)
        m = harness.run_benchmark(cfg, (args.dns, args.flows))
        text = m.to_text()
        print(f"# {v.value}")
        sys.stdout.write(text)
        if out:
            out.mkdir(parents=True, exist_ok=True)
            (out / f"metrics-{v.value}.txt").write_text(text)
            (out / f"entries-{v.value}.csv").write_text(
                "ts,entries\n" + "".join(f"{t},{n}\n" for t, n in m.entry_samples)
            )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    truth = harness.load_truth(args.truth)
    r = harness.evaluate_accuracy(args.input, truth)
    print(f"flows={r.flows}\naccuracy={r.accuracy:.6f}\nchain_membership={r.chain_membership:.6f}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    names = list(args.names)
    if args.file:
        names += _read_lines(args.file)
    bad = 0
    for name in names:
        rep = analysis.validate_domain(name, lenient=args.lenient)
        tags = ",".join(sorted(v.value for v in rep.violations))
        print(f"{name}\t{tags or 'ok'}")
        bad += not rep.valid
    return 1 if bad and args.strict_exit else 0


def cmd_aggregate(args: argparse.Namespace) -> int:
    bl = analysis.Blocklist.load(args.blocklist) if args.blocklist else None
    rep = analysis.aggregate_traffic(iter_output(args.input), bl, lenient=args.lenient)
    print(f"total_bytes={rep.total_bytes}\ncorrelation_rate={rep.correlation_rate:.6f}")
    for cat, b in sorted(rep.category_bytes.items()):
        print(f"category.{cat}={b}")
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())
    return 0


def cmd_coverage(args: argparse.Namespace) -> int:
    resolvers = analysis.load_resolvers(args.resolvers)
    flows = (FlowRecord.from_line(x, i) for i, x in enumerate(_read_lines(args.flows), 1))
    try:
        r = analysis.resolver_coverage(flows, resolvers)
    except analysis.UndefinedRatioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"dns_flows={r.dns_flows}\npublic_flows={r.public_flows}\n"
          f"public_fraction={r.public_fraction:.6f}\ncoverage={r.coverage:.6f}")
    return 0


def cmd_bidir(args: argparse.Namespace) -> int:
    r = analysis.bidirectional_report(iter_output(args.input), lenient=args.lenient)
    print(f"clients={r.clients}\nclient_fraction={r.client_fraction:.6f}\n"
          f"malformed_domains={r.malformed_domains}\ndomain_fraction={r.domain_fraction:.6f}\n"
          f"packet_share={r.packet_share:.6f}")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    dns = [DnsRecord.from_line(x, i) for i, x in enumerate(_read_lines(args.dns), 1)] if args.dns else []
    correlated = iter_output(args.input) if args.input else ()
    m = harness.distribution_metrics(dns, correlated, window=args.window)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in m.to_csv().items():
        (out / name).write_text(text)
        print(out / name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnsflow", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="correlate DNS and flow streams")
    r.add_argument("--dns", action="append", default=[], help="DNS source: path, '-' or tcp:PORT")
    r.add_argument("--flows", action="append", default=[], help="flow source: path, '-' or tcp:PORT")
    r.add_argument("--out", type=Path, help="output directory")
    r.add_argument("--report", type=Path, help="also write the run counters here")
    r.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    add_config_flags(r)
    r.set_defaults(func=cmd_run, parser=r)

    g = sub.add_parser("generate", help="write a synthetic workload with ground truth")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--scenario", choices=["1", "2", "rotation-gap"])
    g.add_argument("--interval", type=int, default=3600, help="rotation interval for rotation-gap")
    g.add_argument("--duration", type=int, default=600)
    g.add_argument("--dns-rate", type=float, default=1.0)
    g.add_argument("--flow-rate", type=float, default=10.0)
    g.add_argument("--services", type=int, default=10)
    g.add_argument("--depth", type=int, help="fixed CNAME depth (default: mixed)")
    g.add_argument("--ttl", type=int, help="fixed TTL (default: mixed)")
    g.add_argument("--ip-sharing", choices=["disjoint", "shared"], default="disjoint")
    g.add_argument("--lag-min", type=int, default=0)
    g.add_argument("--lag-max", type=int, default=60)
    g.add_argument("--mode", choices=["random", "browse"], default="random")
    g.add_argument("--aaaa-fraction", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("bench", help="run variants over workload files")
    b.add_argument("--dns", action="append", required=True)
    b.add_argument("--flows", action="append", required=True)
    b.add_argument("--variants", help="comma separated variants (default: --variant)")
    b.add_argument("--out", type=Path, help="directory for metrics files")
    add_config_flags(b)
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("eval", help="score output against ground truth")
    e.add_argument("--input", type=Path, required=True, help="output file or directory")
    e.add_argument("--truth", type=Path, required=True)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("validate", help="check domain names against the host-name rules")
    v.add_argument("names", nargs="*")
    v.add_argument("--file", type=Path)
    v.add_argument("--lenient", action="store_true", help="allow labels to start with a digit")
    v.add_argument("--strict-exit", action="store_true", help="exit 1 if any name is invalid")
    v.set_defaults(func=cmd_validate)

    a = sub.add_parser("aggregate", help="traffic per domain and category")
    a.add_argument("--input", type=Path, required=True)
    a.add_argument("--blocklist", type=Path)
    a.add_argument("--csv", type=Path, help="write per-category CDF points here")
    a.add_argument("--lenient", action="store_true")
    a.set_defaults(func=cmd_aggregate)

    c = sub.add_parser("coverage", help="share of DNS flows sent to public resolvers")
    c.add_argument("--flows", type=Path, required=True)
    c.add_argument("--resolvers", type=Path, required=True)
    c.set_defaults(func=cmd_coverage)

    d = sub.add_parser("bidir", help="reply traffic towards malformed domains")
    d.add_argument("--input", type=Path, required=True)
    d.add_argument("--lenient", action="store_true")
    d.set_defaults(func=cmd_bidir)

    m = sub.add_parser("metrics", help="chain-length, TTL and names-per-address distributions")
    m.add_argument("--dns", type=Path)
    m.add_argument("--input", type=Path, help="correlated output file or directory")
    m.add_argument("--window", type=int, default=300)
    m.add_argument("--out", type=Path, required=True)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
