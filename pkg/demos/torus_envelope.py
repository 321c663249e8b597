# %% [markdown]
# # Envelopes on a flat torus
#
# For f = A cos(2 pi x) on the flat torus, f is itself psh exactly when
# A pi^2 <= 1.  Below that threshold the envelope is f; above it the
# envelope only touches f on a band around the minimum x = 1/2.

# %%
import numpy as np

from pshenvelope import ObstacleSpec, compute_envelope, eval_obstacle, make_geometry

geom = make_geometry("torus-1", 512)
x = geom.nodes["x1"]

for A in (0.05, 0.1, 0.5, 1.0):
    f = eval_obstacle(ObstacleSpec.catalog("cos-wave", A=A, k=1), geom)
    est = compute_envelope(geom, f, method="both")
    gap = f.values - est.phi_hat.values
    touch = x[gap <= 1e-8]
    band = "everywhere" if touch.size == x.size else "[%.3f, %.3f]" % (touch.min(), touch.max())
    diff, budget = est.cross_check
    print("A = %.2f  A pi^2 = %.2f  contact set %-16s  penalized vs LCP %.1e (budget %.1e)"
          % (A, A * np.pi ** 2, band, diff, budget))

# %% [markdown]
# ## Obstacles from expressions
#
# Any expression in the grid coordinates works as an obstacle.

# %%
f = eval_obstacle(ObstacleSpec.parse("expr:0.4*cos(2*pi*x) + 0.2*sin(4*pi*x)"), geom)
est = compute_envelope(geom, f)
print("C0 = %.4f, error budget %.2e" % (est.c0, est.error_budget))
print("width of the bracket:", np.max(est.upper.values - est.lower.values))
