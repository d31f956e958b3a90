# %% [markdown]
# # Infection age: Volterra fields and the transport density
#
# When the initial infection ages have a density, the infected population has
# a density in age as well. It is transported along characteristics and fed by
# new infections at age zero. Here the two solvers run side by side on a
# heterogeneous model: a Gaussian kernel and a two-block population density.

# %%
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from spatial_age_epi.limit_solver import solve
from spatial_age_epi.pde_solver import pde_residual, reconstruct_totals, solve_boundary
from spatial_age_epi.scenarios import markov_sir_age_density

sc = markov_sir_age_density(T=1.0, h=2e-3)
dk, m = sc.discretize(8), sc.mean_infectivity()

lim = solve(dk, m, sc.initial, sc.T, sc.h)
pde = solve_boundary(dk, m, sc.initial, sc.T, sc.h)

# %% [markdown]
# The boundary flux is the infection rate of the Volterra system. Integrating
# the density over age recovers the cumulative age field.

# %%
I, F = reconstruct_totals(pde, m)
print("boundary vs infection rate:", np.abs(pde.boundary - lim.U).max())
print("integrated density vs age field:", np.abs(pde.cumulative() - lim.cum).max())
print("force of infection:", np.abs(F - lim.F).max())
print("upwind residual:", pde_residual(pde, m))

# %%
n = pde.t.size - 1
fig, ax = plt.subplots(figsize=(6, 3.5))
im = ax.imshow(pde.heatmap(n).T, aspect="auto", origin="lower", extent=[0, pde.ages[-1], 0, 1])
ax.set_xlabel("infection age")
ax.set_ylabel("location x")
ax.set_title(f"infected density at t = {pde.t[n]:g}")
fig.colorbar(im)
fig.tight_layout()
fig.savefig("age_density.png", dpi=120)

# %% [markdown]
# The ridge at age t is where the initially infected population, whose ages
# were uniform on [0, 1/2], now sits. The young ages carry the new infections.
