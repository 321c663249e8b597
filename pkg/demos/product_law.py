# %% [markdown]
# # Envelopes of pulled-back obstacles
#
# If f only depends on the first factor of T^2 = T x T, so does its
# envelope, and it equals the envelope on the factor.  We compare the
# two-dimensional Monge-Ampere computation against the one-dimensional
# obstacle solver.

# %%
import time

import numpy as np

from pshenvelope import ObstacleSpec, PenalizedProblem, eval_obstacle, make_geometry, solve_penalized
from pshenvelope.envelope import product_pullback_check, pullback

factor = make_geometry("torus-1", 64)
product = make_geometry("torus-2", 64)     # y-invariant 64 x 64 grid
f1 = eval_obstacle(ObstacleSpec.catalog("cos-wave", A=0.5, k=1), factor)

t0 = time.perf_counter()
rep = product_pullback_check(factor, f1, product)
print("sup difference %.3e, budget %.3e, %.1f s" % (rep.sup_diff, rep.budget, time.perf_counter() - t0))

# %% [markdown]
# The reduced grid drops the imaginary directions.  On a small full grid
# the answer is the same to solver precision.

# %%
full = make_geometry("torus-2", (8, 8, 8, 8))
red = make_geometry("torus-2", 8)
spec = ObstacleSpec.catalog("cos-wave", A=0.5, k=1)
a = solve_penalized(PenalizedProblem(full, eval_obstacle(spec, full), 0.05))
b = solve_penalized(PenalizedProblem(red, eval_obstacle(spec, red), 0.05))
lift = b.phi.values[:, None, :, None]
print("full vs reduced grid:", np.max(np.abs(a.phi.values - lift)))

# the factor envelope pulled back is independent of the second factor
pb = pullback(factor, product, rep.factor.phi_hat.values)
print("pullback constant along x2:", np.ptp(pb, axis=1).max() == 0)
