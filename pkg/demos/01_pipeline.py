"""From simulated missions to a dependability report.

A scripted robot crosses an obstacle field while its clearance sensor is
perturbed.  Its logged clearances are abstracted into risk levels, a small
Markov chain is estimated from them and the five properties are checked.

    python demos/01_pipeline.py [sigma]
"""
import sys
import warnings

from depcheck import dependability
from depcheck.estimation import build_from_episodes, count_transitions, RiskMap
from depcheck.simenv import SimConfig, simulate

sigma = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5

episodes = simulate(SimConfig(sigma=sigma, episodes=300, seed=1))
outcomes = {o: sum(e.outcome == o for e in episodes) for o in ("goal", "crash", "timeout")}
print(f"sigma = {sigma}: {outcomes}")

# risk-level transitions observed in the logs
print("\nlevel-to-level counts (N, B1, B2, B3, C):")
print(count_transitions(episodes, RiskMap()))

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    model = build_from_episodes(episodes)
print(f"\nproduct model: {model.n_states} states, expected mission length "
      f"{model.meta['l_mis']:.1f} steps\n")

print(dependability.report(model).to_table())
