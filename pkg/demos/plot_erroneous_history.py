"""
How much does a wrong prior hurt?
=================================

Replace the previous estimate with the true previous position plus
Gaussian error of size E and watch the mean error grow.
"""

from srlknn import benchmark_config, generate_synthetic, perturbation_study, preset_config

sigma = 2.0
db, trajs = generate_synthetic(benchmark_config(seed=0))
errors = [0.0, 0.5 * sigma, sigma, 1.5 * sigma, 2 * sigma]

for name in ("srl-mean", "srl-hist"):
    study = perturbation_study(db, trajs, preset_config(name, sigma=sigma), errors, seeds=range(5))
    print(name)
    for row in study.seed_average():
        print(f"  E = {row['E']:.1f} m  mean error {row['mean']:.3f} m  (seed var {row['seed_var']:.4f})")
