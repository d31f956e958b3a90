# %% [markdown]
# # Reinfection and a latent stage
#
# Two variations on the basic model. In the SIS model recovered individuals
# become susceptible again. In the second model infectivity follows random
# stages, with a latent period of zero infectivity before a random infectious
# level.

# %%
import numpy as np

from spatial_age_epi.limit_solver import reproduction_number, sis_equilibrium, solve, solve_sis
from spatial_age_epi.scenarios import exposed_infectious, sis_homogeneous

sc = sis_homogeneous()
dk, m = sc.discretize(4), sc.mean_infectivity()
I_star, S_star, R0 = sis_equilibrium(dk, m)
print(f"R0 = {R0:.3f}; endemic level {I_star[0]:.6f}; 1 - 1/(R0 b) = {1 - 1 / (2 * R0):.6f}")

f = solve_sis(dk, m, sc.initial, sc.T, sc.h, derived=False)
for t in (1, 5, 10, 30):
    print(f"t = {t:>2}: I = {f.I[int(round(t / sc.h)), 0]:.6f}")

# %% [markdown]
# Below the threshold the equilibrium iteration collapses to the disease-free
# state.

# %%
print(sis_equilibrium(sis_homogeneous(b=0.8).discretize(4), m)[0])

# %% [markdown]
# For the staged law the mean infectivity has no closed form. It is estimated
# by Monte Carlo over sampled paths, and the standard error is kept alongside.

# %%
sc = exposed_infectious()
m = sc.mean_infectivity()
print(f"R0 estimate {reproduction_number(m):.3f}, max standard error of lambda_bar {m.lambda_bar_se.max():.4f}")
lim = solve(sc.discretize(16), m, sc.initial, sc.T, sc.h, time_index=[0], age_index=[0])
peak = lim.I.mean(axis=1).argmax()
print(f"epidemic peak at t = {lim.t[peak]:.2f} with I = {lim.I.mean(axis=1)[peak]:.4f}")
