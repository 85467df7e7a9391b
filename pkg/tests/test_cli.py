import json
import subprocess
import sys
from dataclasses import fields

import pytest

from dnsflow import cli, harness
from dnsflow.io import iter_output
from dnsflow.model import EngineConfig, Variant


@pytest.fixture
def workload(tmp_path):
    w = harness.generate_workload(harness.scenario_spec(1, duration=10))
    return w.write(tmp_path / "w")


def test_run_writes_output(tmp_path, workload, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "--dns", str(workload["dns"]), "--flows", str(workload["flows"]),
                     "--out", str(out)])
    assert code == 0
    assert len(list(iter_output(out))) == 100
    text = capsys.readouterr().out
    assert "correlation_rate=1.0" in text and "conserved=True" in text


def test_run_variant_flag(tmp_path, workload, monkeypatch):
    seen = {}
    real = cli.Engine

    def spy(cfg, *a, **kw):
        seen["cfg"] = cfg
        return real(cfg, *a, **kw)

    monkeypatch.setattr(cli, "Engine", spy)
    cli.main(["run", "--variant", "no-rotation", "--dns", str(workload["dns"]),
              "--flows", str(workload["flows"]), "--out", str(tmp_path / "o")])
    assert seen["cfg"].variant is Variant.NO_ROTATION


def test_run_without_sources_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--out", str(tmp_path)])
    assert info.value.code == 2


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--num-splits", "3"])
    assert info.value.code == 2


def test_missing_file_is_an_error(tmp_path, capsys):
    code = cli.main(["run", "--dns", str(tmp_path / "nope"), "--flows", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "o")])
    assert code == 2 and "cannot open" in capsys.readouterr().err


def test_help_lists_every_config_field():
    text = cli.build_parser()._subparsers._group_actions[0].choices["run"].format_help()
    for f in fields(EngineConfig):
        assert cli.CONFIG_FLAGS[f.name][0] in text


def test_flags_round_trip():
    cfg = EngineConfig(a_clear_up_interval=10, c_clear_up_interval=20, num_split=3, chain_limit=4,
                       long_clear_up_interval=500, variant=Variant.EXACT_TTL, queue_capacity=7,
                       buffer_capacity=9, fill_workers=3, lookup_workers=5, write_workers=1,
                       use_dst_ip=True, drop_when_full=True, batch_size=11, flush_records=12,
                       flush_seconds=2, roll_interval=60, sample_interval=5)
    args = cli.build_parser().parse_args(["run", *cli.config_to_argv(cfg)])
    assert cli.config_from_args(args) == cfg


def test_flags_override_config_file(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"num_split": 4, "chain_limit": 3}))
    assert cli.main(["run", "--config", str(p), "--num-split", "8", "--dump-config"]) == 0
    dumped = json.loads(capsys.readouterr().out)
    assert dumped["num_split"] == 8 and dumped["chain_limit"] == 3


def test_bad_config_file_key(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["run", "--config", str(p), "--dump-config"]) == 2


def test_generate_and_eval(tmp_path, capsys):
    assert cli.main(["generate", "--scenario", "2", "--out", str(tmp_path / "w")]) == 0
    assert cli.main(["run", "--dns", str(tmp_path / "w/dns.tsv"), "--flows",
                     str(tmp_path / "w/flows.tsv"), "--out", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    assert cli.main(["eval", "--input", str(tmp_path / "o"), "--truth",
                     str(tmp_path / "w/truth.tsv")]) == 0
    assert "accuracy=0.500000" in capsys.readouterr().out


def test_generate_custom(tmp_path, capsys):
    assert cli.main(["generate", "--out", str(tmp_path), "--duration", "20", "--depth", "2",
                     "--ttl", "30", "--seed", "3"]) == 0
    assert "flows=" in capsys.readouterr().out


def test_bench(tmp_path, workload, capsys):
    assert cli.main(["bench", "--dns", str(workload["dns"]), "--flows", str(workload["flows"]),
                     "--variants", "main,no-split", "--out", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m/metrics-no-split.txt").exists()
    assert "# no-split" in capsys.readouterr().out


def test_validate(capsys):
    assert cli.main(["validate", "www.example.com", "foo_bar.com", "1a.com"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["www.example.com\tok", "foo_bar.com\tBadLabelChars", "1a.com\tBadLabelChars"]
    assert cli.main(["validate", "--lenient", "1a.com"]) == 0
    assert capsys.readouterr().out == "1a.com\tok\n"
    assert cli.main(["validate", "--strict-exit", "a_b.com"]) == 1


def test_aggregate_and_bidir(tmp_path, workload, capsys):
    out = tmp_path / "o"
    cli.main(["run", "--dns", str(workload["dns"]), "--flows", str(workload["flows"]), "--out", str(out)])
    bl = tmp_path / "bl.tsv"
    bl.write_text("service0.com\tspam\n")
    capsys.readouterr()
    assert cli.main(["aggregate", "--input", str(out), "--blocklist", str(bl),
                     "--csv", str(tmp_path / "cdf.csv")]) == 0
    text = capsys.readouterr().out
    assert "category.spam=" in text and "category.ok=" in text
    assert (tmp_path / "cdf.csv").read_text().startswith("category,rank")
    assert cli.main(["bidir", "--input", str(out)]) == 0
    assert "client_fraction=0.000000" in capsys.readouterr().out


def test_coverage(tmp_path, capsys):
    flows = tmp_path / "f.tsv"
    lines = [f"0\t192.168.0.1\t10.53.0.1\t17\t4000\t53\t1\t80" for _ in range(19)]
    lines.append("0\t192.168.0.1\t8.8.8.8\t17\t4000\t53\t1\t80")
    flows.write_text("\n".join(lines) + "\n")
    res = tmp_path / "r.txt"
    res.write_text("8.8.8.8\n")
    assert cli.main(["coverage", "--flows", str(flows), "--resolvers", str(res)]) == 0
    assert "coverage=0.950000" in capsys.readouterr().out
    flows.write_text("0\t192.168.0.1\t8.8.8.8\t6\t4000\t443\t1\t80\n")
    assert cli.main(["coverage", "--flows", str(flows), "--resolvers", str(res)]) == 1


def test_metrics(tmp_path, workload):
    out = tmp_path / "o"
    cli.main(["run", "--dns", str(workload["dns"]), "--flows", str(workload["flows"]), "--out", str(out)])
    assert cli.main(["metrics", "--dns", str(workload["dns"]), "--input", str(out),
                     "--out", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m/chain_length.csv").read_text() == "cname_hops,records\n1,100\n"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dnsflow", "validate", "a.com"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout == "a.com\tok\n"
