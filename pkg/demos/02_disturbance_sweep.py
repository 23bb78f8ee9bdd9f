"""How the properties move as the sensor disturbance grows.

For each sigma on a grid, 300 missions are simulated and a model is built;
the rank correlation of each property with sigma summarises the trend.

    python demos/02_disturbance_sweep.py
"""
import warnings

from scipy.stats import spearmanr

from depcheck import dependability
from depcheck.estimation import build_from_episodes
from depcheck.simenv import SimConfig, sweep

runs = sweep(None, SimConfig(episodes=300, seed=0))
rows = []
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    for sigma, eps in runs.items():
        rep = dependability.report(build_from_episodes(eps))
        rows.append((sigma, rep.values))

names = dependability.PROPERTIES
print("sigma  " + "  ".join(f"{n:>10}" for n in names))
for sigma, v in rows:
    print(f"{sigma:5.1f}  " + "  ".join(f"{v[n]:10.4f}" for n in names))

print("\nSpearman correlation with sigma:")
for n in names:
    rho = spearmanr([s for s, _ in rows], [v[n] for _, v in rows]).statistic
    print(f"  {n:<11} {rho:+.3f}")
