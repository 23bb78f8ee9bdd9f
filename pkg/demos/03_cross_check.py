"""Checking the checker.

Exact values from the linear-equation engine are compared with plain Monte
Carlo simulation of the same chain, and the model is exported for PRISM.

    python demos/03_cross_check.py [output-prefix]
"""
import sys
import warnings

from depcheck import dependability, oracle
from depcheck.estimation import build_from_episodes
from depcheck.prism import import_model, write_prism
from depcheck.simenv import SimConfig, simulate

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    model = build_from_episodes(simulate(SimConfig(sigma=1.0, episodes=300, seed=3)))

exact = dependability.report(model).values
mc = oracle.mc_properties(model, n_traces=500_000, seed=0)
print(f"{'property':<11} {'exact':>10} {'monte carlo':>12} {'3 SE':>8}  agree")
for name in dependability.PROPERTIES:
    e = mc[name]
    print(f"{name:<11} {exact[name]:10.5f} {e.estimate:12.5f} {3 * e.std_error:8.5f}  "
          f"{'yes' if e.agrees(exact[name]) else 'NO'}")

prefix = sys.argv[1] if len(sys.argv) > 1 else "depcheck_demo"
pm, props = write_prism(model, prefix)
same = (import_model(pm.read_text()).matrix != model.matrix).nnz == 0
print(f"\nwrote {pm} and {props}; re-import reproduces the matrix exactly: {same}")
