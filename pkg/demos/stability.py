# %% [markdown]
# # Stability under perturbations of the obstacle
#
# The envelope map is 1-Lipschitz in the sup norm.  We perturb an obstacle
# by random Gaussian bumps and compare envelope and obstacle differences,
# allowing twice the numerical error budget.

# %%
import numpy as np

from pshenvelope import ObstacleSpec, compute_envelope, eval_obstacle, make_geometry
from pshenvelope.cli import random_bump

geom = make_geometry("torus-1", 512)
f = eval_obstacle(ObstacleSpec.catalog("cos-wave", A=0.5, k=1), geom)
base = compute_envelope(geom, f)
rng = np.random.default_rng(1729)

ratios = []
for trial in range(20):
    bump = random_bump(geom, rng, 0.1).values
    est = compute_envelope(geom, f.values + bump)
    d_env = np.max(np.abs(est.phi_hat.values - base.phi_hat.values))
    d_obs = np.max(np.abs(bump))
    ok = d_env <= d_obs + 2 * max(est.error_budget, base.error_budget)
    ratios.append(d_env / d_obs)
    if trial < 5:
        print("trial %d  |d phi| %.4f  |d f| %.4f  %s" % (trial, d_env, d_obs, "ok" if ok else "VIOLATED"))
print("largest |d phi| / |d f| over 20 trials: %.3f" % max(ratios))

# %% [markdown]
# Adding a constant moves the complementarity envelope by exactly that
# constant.

# %%
a = compute_envelope(geom, f, method="lcp").phi_hat.values
b = compute_envelope(geom, f.values + 0.25, method="lcp").phi_hat.values
print("shift error:", np.max(np.abs(b - a - 0.25)))
