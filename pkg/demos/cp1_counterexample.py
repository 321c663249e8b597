# %% [markdown]
# # A C^{1,1} envelope that is not C^2
#
# On the Riemann sphere with the Fubini-Study metric the obstacle
#
#     f = (|z|^2 - 1)^2 - log(1 + |z|^2)
#
# (blended smoothly into a cap near the other pole) has the envelope
# ((|z|^2 - 1)_+)^2 - log(1 + |z|^2) on |z|^2 <= 5/4.  Its second radial
# derivative jumps from 0 to 8 across |z| = 1.  We recover this three ways.

# %%
import numpy as np

from pshenvelope import (DEFAULT_SCHEDULE, LcpProblem, ObstacleSpec, PenalizedProblem, bound_report,
                         compute_c0, continuation_sweep, eval_obstacle, make_geometry,
                         radial_second_derivative_jump, solve_envelope_lcp)
from pshenvelope.model_library import phi_section4_m

geom = make_geometry("cp1-radial", 4096)
f = eval_obstacle(ObstacleSpec.catalog("cp1-section4"), geom)
m = geom.nodes["m"]
U = m <= 5 / 9          # |z|^2 <= 5/4
exact = phi_section4_m(m)

# %% [markdown]
# ## 1. The obstacle problem directly
#
# In complex dimension one psh means 1 + Laplacian >= 0, so the envelope
# solves a linear complementarity problem.

# %%
phi = solve_envelope_lcp(LcpProblem(geom, f))
print("sup |phi - closed form| on U:", np.max(np.abs(phi.values - exact)[U]))
contact = np.abs(phi.values - f.values) < 1e-8
r2 = geom.nodes["s"][contact]
print("contact set in |z|^2: [%.4f, %.4f]" % (r2.min(), r2.max()))

# %% [markdown]
# The contact set runs a little past 5/4: beyond the chart U the cap in
# the obstacle moves the free boundary, so the closed form is only the
# envelope on U.

# %%
jump = radial_second_derivative_jump(geom, phi, 1.0)
print("d^2 phi / dr^2 at r = 1: left %.3f, right %.3f" % (jump.left, jump.right))
print("same for the obstacle:    jump %.3f" % radial_second_derivative_jump(geom, f, 1.0).jump)

# %% [markdown]
# ## 2. Penalized Monge-Ampere along a decreasing eps schedule

# %%
sols = continuation_sweep(PenalizedProblem(geom, f, DEFAULT_SCHEDULE[0]), DEFAULT_SCHEDULE)
c0 = compute_c0(geom, f)
rep = bound_report(sols, f, c0)
print("C0 =", round(c0, 4))
print("   eps    iters   sup|phi_eps - envelope|   sup lambda1")
for s, row in zip(sols, rep.rows):
    err = np.max(np.abs(s.phi.values - phi.values))
    print("%7.0e  %4d   %12.3e            %8.1f" % (s.eps, s.iterations, err, row.sup_lambda1))

# %% [markdown]
# The error shrinks like eps log(1/eps).  The largest Hessian eigenvalue
# keeps growing over this schedule: the true envelope bends sharply where
# it leaves the obstacle in the blended region, and the penalized solutions
# only settle onto that curvature at much smaller eps.

# %%
fsup = np.max(np.abs(f.values))
last = sols[-1]
lower = last.phi.values - c0 * last.eps
upper = last.phi.values - last.eps * (np.log(last.eps) - 2 * fsup)
print("closed form inside the eps = 1e-3 bracket on U:",
      bool(np.all((lower <= exact + 1e-3)[U] & (exact <= upper + 1e-3)[U])))
