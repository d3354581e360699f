"""
Error CDFs and percentiles
==========================

Pool several seeds of the benchmark and compare error distributions.
"""

import numpy as np

from srlknn import TrajectoryResult, benchmark_config, error_cdf, generate_synthetic, preset_config, replay_many

pooled = {"classic": [], "srl-mean": []}
for seed in range(4):
    db, trajs = generate_synthetic(benchmark_config(seed))
    for name in pooled:
        pooled[name].append(replay_many(db, trajs, preset_config(name)))

for name, results in pooled.items():
    res = TrajectoryResult.concatenate(results, name)
    cdf = error_cdf(res.errors)
    # fraction of steps within 1, 2 and 4 m
    within = [cdf.fractions[np.searchsorted(cdf.levels, r, side="right") - 1] for r in (1.0, 2.0, 4.0)]
    print(f"{name:9s} P50 {cdf.quantile(0.5):.2f} m  P80 {res.p80:.2f} m  "
          f"<=1 m {within[0]:.0%}  <=2 m {within[1]:.0%}  <=4 m {within[2]:.0%}")
