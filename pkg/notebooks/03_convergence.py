# %% [markdown]
# # How fast does the stochastic model approach its limit?
#
# A small ladder of population sizes with K = ceil(sqrt(N)) cells. For each
# rung we simulate independent replications and record the sup-in-time spatial
# L1 distance to the limit. With roughly sqrt(N) individuals per cell, the
# error should shrink like N^(-1/4).

# %%
import numpy as np

from spatial_age_epi.harness import convergence_study, ladder
from spatial_age_epi.scenarios import markov_sir

sc = markov_sir()
report = convergence_study(sc, ladder([10**3, 10**4, 3 * 10**4], replications=5), master_seed=2024)

# %%
print(f"{'N':>7} {'K':>4} {'S':>8} {'I':>8} {'age':>8}")
for r in report.rungs:
    print(f"{r.N:>7} {r.K:>4} {r.mean['S']:8.4f} {r.mean['I']:8.4f} {r.mean['cum']:8.4f}")

# %% [markdown]
# A log-log fit of the mean error in S against N.

# %%
N = np.array([r.N for r in report.rungs])
err = np.array([r.mean["S"] for r in report.rungs])
slope = np.polyfit(np.log(N), np.log(err), 1)[0]
print(f"fitted exponent {slope:.3f} (N^-1/4 would be -0.25)")
