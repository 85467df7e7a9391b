import numpy as np
import pytest

from conftest import a_rec, flow
from dnsflow import harness
from dnsflow.harness import (
    EvaluationError,
    WorkloadSpec,
    distribution_metrics,
    evaluate_accuracy,
    generate_workload,
    load_truth,
    run_benchmark,
    run_workload,
    scenario_spec,
)
from dnsflow.model import CorrelatedRecord, EngineConfig, RType, Variant


def test_scenario_one_layout():
    w = generate_workload(scenario_spec(1))
    assert [s.domain for s in w.services] == ["www.service0.com", "www.service1.com"]
    assert len({s.ip for s in w.services}) == 2
    per_service = {s.domain: 0 for s in w.services}
    for domain in w.truth.values():
        per_service[domain] += 1
    assert per_service == {"www.service0.com": 300, "www.service1.com": 300}


def test_scenario_two_shares_one_address():
    w = generate_workload(scenario_spec(2))
    assert len({s.ip for s in w.services}) == 1
    a_times = {r.qname: r.ts for r in w.dns_records() if r.rtype is RType.A}
    first, second = (s.names[-1] for s in w.services)
    assert a_times[first] < a_times[second]


def test_no_flows():
    w = generate_workload(WorkloadSpec(flow_rate=0, dns_rate=2, duration_seconds=30))
    assert w.flow_lines == [] and w.dns_lines


def test_every_flow_preceded_by_its_dns():
    w = generate_workload(WorkloadSpec(duration_seconds=200, dns_rate=2, flow_rate=20,
                                       num_services=30, aaaa_fraction=0.3, seed=5))
    first_seen = {}
    for r in w.dns_records():
        if r.rtype in (RType.A, RType.AAAA):
            first_seen.setdefault(r.answer, r.ts)
    for f in w.flow_records():
        assert first_seen[f.src_ip] <= f.ts
    assert len(w.truth) == len(w.flow_lines)


def test_seed_determinism(tmp_path):
    spec = WorkloadSpec(duration_seconds=100, dns_rate=3, flow_rate=30, seed=11)
    a = generate_workload(spec).write(tmp_path / "a")
    b = generate_workload(spec).write(tmp_path / "b")
    for kind in ("dns", "flows", "truth"):
        assert a[kind].read_bytes() == b[kind].read_bytes()
    other = generate_workload(WorkloadSpec(duration_seconds=100, dns_rate=3, flow_rate=30, seed=12))
    assert other.flow_lines != generate_workload(spec).flow_lines


def test_truth_round_trip(tmp_path):
    w = generate_workload(scenario_spec(1, duration=5))
    paths = w.write(tmp_path)
    assert load_truth(paths["truth"]) == w.truth


def test_bad_specs():
    with pytest.raises(ValueError):
        WorkloadSpec(dns_rate=-1)
    with pytest.raises(ValueError):
        WorkloadSpec(ip_sharing="sometimes")
    with pytest.raises(ValueError):
        scenario_spec(3)


def test_scenarios_end_to_end():
    for number, expected in ((1, 1.0), (2, 0.5)):
        w = generate_workload(scenario_spec(number))
        _, sink = run_workload(EngineConfig(), w)
        report = evaluate_accuracy(sink.records, w.truth)
        assert report.accuracy == expected
    assert set(report.by_result) == {"www.service1.com"}


def test_accuracy_from_output_directory(tmp_path):
    w = generate_workload(scenario_spec(1, duration=10))
    from dnsflow.io import DirectorySink
    run_workload(EngineConfig(), w, DirectorySink(tmp_path / "out"))
    assert evaluate_accuracy(tmp_path / "out", w.truth).accuracy == 1.0


def test_empty_accuracy_is_vacuous():
    assert evaluate_accuracy([], {}).accuracy == 1.0


def test_unknown_flow_rejected():
    with pytest.raises(EvaluationError):
        evaluate_accuracy([CorrelatedRecord(flow(1, "10.0.0.1"))], {})


def test_generator_engine_consistency():
    spec = WorkloadSpec(duration_seconds=300, dns_rate=2, flow_rate=50, num_services=50,
                        ttl={30: 0.5, 300: 0.5}, flow_lag=(0, 100), seed=4)
    w = generate_workload(spec)
    report, sink = run_workload(EngineConfig(), w)
    assert report.correlation_rate == 1.0
    assert evaluate_accuracy(sink.records, w.truth).accuracy == 1.0


@pytest.fixture(scope="module")
def gap_results():
    w = generate_workload(harness.rotation_gap_spec(60))
    base = EngineConfig(a_clear_up_interval=60, c_clear_up_interval=120)
    return harness.compare_variants(w, base)


def test_no_rotation_strictly_worse(gap_results):
    assert gap_results[Variant.NO_ROTATION].correlation_rate < gap_results[Variant.MAIN].correlation_rate


def test_no_clear_up_grows_monotonically(gap_results):
    keep = gap_results[Variant.NO_CLEAR_UP]
    assert keep.entries_monotone
    assert keep.peak_entries >= gap_results[Variant.MAIN].peak_entries
    assert keep.correlation_rate >= gap_results[Variant.MAIN].correlation_rate


def test_no_split_same_rate(gap_results):
    assert gap_results[Variant.NO_SPLIT].correlation_rate == gap_results[Variant.MAIN].correlation_rate


def test_metrics_report_fields(gap_results):
    m = gap_results[Variant.MAIN]
    assert m.rotations > 0 and m.drops == 0 and m.flows > 0
    text = m.to_text()
    assert "correlation_rate=" in text and "entries_monotone=" in text


def test_benchmark_from_files(tmp_path):
    w = generate_workload(scenario_spec(1, duration=10))
    paths = w.write(tmp_path)
    m = run_benchmark(EngineConfig(), ([paths["dns"]], [paths["flows"]]))
    assert m.flows == 100 and m.correlation_rate == 1.0


def test_distribution_depth_one():
    w = generate_workload(WorkloadSpec(duration_seconds=60, cname_depth=1, ttl=60, seed=2))
    _, sink = run_workload(EngineConfig(), w)
    m = distribution_metrics(w.dns_records(), sink.records)
    assert set(m.chain_length_histogram) == {1}


def test_distribution_ttl_step():
    m = distribution_metrics([a_rec(t, "n", "10.0.0.1", ttl=60) for t in range(5)])
    assert m.ttl_values.tolist() == [60] and m.ttl_cdf.tolist() == [1.0]


def test_names_per_ip_window():
    dns = [a_rec(0, "a.com", "10.0.0.1"), a_rec(10, "b.com", "10.0.0.1"),
           a_rec(20, "c.com", "10.0.0.2"), a_rec(400, "d.com", "10.0.0.1")]
    m = distribution_metrics(dns, window=300)
    assert m.names_per_ip == {1: 2, 2: 1}
    xs, ys = m.names_per_ip_cdf
    assert xs.tolist() == [1, 2] and np.allclose(ys, [2 / 3, 1.0])
    files = m.to_csv()
    assert set(files) == {"chain_length.csv", "ttl_cdf.csv", "names_per_ip.csv"}
    assert "2,1,1.000000" in files["names_per_ip.csv"]
