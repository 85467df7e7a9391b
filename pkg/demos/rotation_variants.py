"""Compare the map-maintenance variants on a workload whose flows lag their DNS.

Shorter rotation intervals forget answers sooner. Keeping two generations
recovers most of what a single-generation map loses, while never clearing
anything keeps every answer at the cost of unbounded growth.
"""

from dnsflow import EngineConfig, Variant
from dnsflow import harness

INTERVAL = 60

workload = harness.generate_workload(harness.rotation_gap_spec(INTERVAL))
base = EngineConfig(a_clear_up_interval=INTERVAL, c_clear_up_interval=2 * INTERVAL, sample_interval=10)
results = harness.compare_variants(workload, base)

print(f"{'variant':<12} {'rate':>7} {'peak entries':>13} {'monotone':>9}")
for variant, m in results.items():
    print(f"{variant.value:<12} {m.correlation_rate:7.4f} {m.peak_entries:13d} {str(m.entries_monotone):>9}")

keep = results[Variant.NO_CLEAR_UP]
print("\nentry count over time without clean-up:")
for ts, n in keep.entry_samples:
    print(f"  t={ts:<6} {'#' * (n // 20)} {n}")
