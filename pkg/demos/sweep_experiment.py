"""
Running a sweep the same way the command line does
==================================================

Experiments are configured declaratively and write one CSV of
(seed, beta, metric, value) rows plus a JSON file with percentile
aggregates, so a run is reproducible from its config alone. The same
sweep is reachable as `rotcert run tls_sweep --n 12 ...`.
"""

from rotcert import ExperimentConfig, run

config = ExperimentConfig(
    experiment="tls_sweep",
    n=12,
    beta_list=[0.1, 0.3],
    seeds=range(3),
    out="sweep_out",
)
record = run(config)

print(f"wrote sweep_out/tls_sweep.csv with {len(record.rows)} rows")
print("median geodesic error by outlier rate:")
for beta in config.beta_list:
    errs = record.values("error_deg", beta=beta)
    errs.sort()
    print(f"  beta={beta}: {errs[len(errs) // 2]:.3f} deg over {len(errs)} seeds")

print("aggregates carry 25/50/75/90th percentiles per metric:")
p = record.aggregates[(0.3, "gap")]
print(f"  gap at beta=0.3: p50={p[1]:.2e}, p90={p[3]:.2e}")
