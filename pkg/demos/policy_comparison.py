"""A quick, small version of the balanced-arrival comparison.

Ten users, five arms, three features.  Twenty seeds instead of one hundred
keep this under a minute or so; the acceptance suite runs the full study.
"""
import numpy as np

from ebmbandit import EnvSpec, PolicyConfig, RunConfig, run_replications

seeds = tuple(range(20))
results = {}
for kind in ["ebmUCB", "ebmTS", "LinUCB", "LinTS", "OLSGreedy"]:
    cfg = RunConfig(env=EnvSpec(), policy=PolicyConfig(kind=kind), horizon=1000, seeds=seeds)
    results[kind] = run_replications(cfg).final_total
    r = results[kind]
    print(f"{kind:10s} final regret {r.mean():7.1f} +/- {r.std(ddof=1) / np.sqrt(len(r)):5.1f}")

# Same seeds means same environments, arrivals and contexts, so paired
# differences are much less noisy than the raw spreads.
diff = results["LinUCB"] - results["ebmUCB"]
print(f"LinUCB - ebmUCB: {diff.mean():.1f} (paired SE {diff.std(ddof=1) / np.sqrt(len(diff)):.1f})")
