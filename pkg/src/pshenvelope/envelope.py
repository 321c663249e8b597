"""Envelope estimates with two-sided error bars.

For a converged penalized solution ``phi_eps`` the envelope satisfies

    phi_eps - C0 eps  <=  phi_f  <=  phi_eps - eps (n log eps - 2 ||f||_inf)

where ``C0`` is the largest log volume ratio of ``g + f_{j kbar}`` over the
set where it is positive.  Both sides hold up to the discretization error,
which is budgeted as ``C_GRID h^2``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryMismatchError, GridGeometry, ScalarField, hessian_values
from .model_library import obstacle_values
from .oracle import LcpProblem, solve_envelope_lcp
from .penalized import PenalizedProblem, PenalizedSolution, continuation_sweep

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
METHODS = ("penalized", "lcp", "both")

# sup |phi_lcp - phi_exact| / h^2 on the cp1 test case at N = 2048 and 4096
# (3.996 and 3.998)
C_GRID = 4.0


class EnvelopeMismatchError(RuntimeError):
    """Penalized and complementarity envelopes disagree beyond the combined budget."""


def grid_tolerance(geom: GridGeometry) -> float:
    """Discretization allowance ``C_GRID h^2`` (``h`` the coarsest spacing)."""
    return C_GRID * geom.h ** 2


def _f(geom, f):
    return np.asarray(obstacle_values(geom, f), dtype=float)


def compute_c0(geom: GridGeometry, f) -> float:
    """``max(0, sup log(det(g + f_{j kbar}) / det g))`` over nodes where the form is positive."""
    fv = _f(geom, f)
    if geom.complex_dim == 1:
        H = hessian_values(geom, fv)[..., 0, 0].real
        ratio = 1.0 + H / np.asarray(geom.metric_coeff)[..., 0, 0].real
        pos = ratio > 0
    else:
        H = hessian_values(geom, fv)
        a = 1.0 + H[..., 0, 0].real
        d = 1.0 + H[..., 1, 1].real
        bb = np.abs(H[..., 0, 1]) ** 2
        ratio = a * d - bb
        pos = (ratio > 0) & (a > 0)
    if not np.any(pos):
        warnings.warn("g + i ddbar f is nowhere positive on the grid; using C0 = 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    return max(0.0, float(np.max(np.log(ratio[pos]))))


def sandwich_width(eps, c0, n, f_sup) -> float:
    return eps * (c0 - n * math.log(eps) + 2.0 * f_sup)


def sandwich_bounds(sol: PenalizedSolution, f, c0: float, eps: float | None = None):
    """Lower and upper bounds for the envelope from a converged solution."""
    if not sol.converged:
        raise ValueError(f"solution at eps={sol.eps} did not converge")
    eps = sol.eps if eps is None else eps
    geom = sol.geometry
    fv = _f(geom, f)
    phi = sol.phi.values
    n = geom.complex_dim
    lower = phi - c0 * eps
    upper = phi - eps * (n * math.log(eps) - 2.0 * float(np.max(np.abs(fv))))
    return ScalarField(geom, lower), ScalarField(geom, upper)


@dataclass(frozen=True)
class EnvelopeEstimate:
    phi_hat: ScalarField
    lower: ScalarField
    upper: ScalarField
    c0: float
    eps_schedule: tuple
    method: str
    error_budget: float
    solutions: tuple = field(default=(), repr=False)
    cross_check: tuple | None = None   # (sup difference, combined budget) for method "both"

    @property
    def geometry(self):
        return self.phi_hat.geometry


def _penalized(geom, fv, schedule, c0, solver_options):
    sols = continuation_sweep(PenalizedProblem(geom, ScalarField(geom, fv), schedule[0],
                                               **solver_options), schedule)
    last = sols[-1]
    lo, up = sandwich_bounds(last, fv, c0)
    tau = grid_tolerance(geom)
    width = sandwich_width(last.eps, c0, geom.complex_dim, float(np.max(np.abs(fv))))
    # midpoint, capped by the obstacle (the envelope never exceeds f)
    mid = np.minimum(0.5 * (lo.values + up.values), fv)
    mid = np.maximum(mid, lo.values)
    return sols, ScalarField(geom, mid), lo, up, width + tau


def compute_envelope(geom: GridGeometry, f, eps_schedule=DEFAULT_SCHEDULE, method="penalized",
                     lcp_options=None, strict=False, **solver_options) -> EnvelopeEstimate:
    """Estimate the envelope of ``f`` with rigorous-up-to-grid bounds.

    ``method="penalized"`` returns the (obstacle-capped) sandwich midpoint at
    the smallest eps.  ``"lcp"`` (n = 1) returns the complementarity solution
    with bounds ``+/- C_GRID h^2``.  ``"both"`` returns the complementarity
    field with the penalized bounds widened by the grid allowance and records
    the sup difference between the two estimates against the combined
    budget; with ``strict=True`` a disagreement raises.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if method in ("lcp", "both") and geom.complex_dim != 1:
        raise ValueError(f"method {method!r} needs complex dimension one")
    fv = _f(geom, f)
    schedule = tuple(float(e) for e in eps_schedule)
    tau = grid_tolerance(geom)
    c0 = compute_c0(geom, fv)
    if method == "lcp":
        phi = solve_envelope_lcp(LcpProblem(geom, ScalarField(geom, fv), **(lcp_options or {})))
        return EnvelopeEstimate(phi, ScalarField(geom, phi.values - tau),
                                ScalarField(geom, phi.values + tau), c0, (), "lcp", tau)
    sols, mid, lo, up, budget = _penalized(geom, fv, schedule, c0, solver_options)
    if method == "penalized":
        return EnvelopeEstimate(mid, lo, up, c0, schedule, "penalized", budget, tuple(sols))
    phi = solve_envelope_lcp(LcpProblem(geom, ScalarField(geom, fv), **(lcp_options or {})))
    diff = float(np.max(np.abs(phi.values - mid.values)))
    combined = budget + tau
    if diff > combined:
        msg = f"penalized and LCP envelopes differ by {diff:.3e} > budget {combined:.3e}"
        if strict:
            raise EnvelopeMismatchError(msg)
        log.warning(msg)
    return EnvelopeEstimate(phi, ScalarField(geom, lo.values - tau), ScalarField(geom, up.values + tau),
                            c0, schedule, "both", combined, tuple(sols), (diff, combined))


# ---------------------------------------------------------------------------
# checks

@dataclass(frozen=True)
class StabilityReport:
    envelope_diff: float
    obstacle_diff: float
    budget: float
    passed: bool


def stability_check(geom: GridGeometry, f1, f2, schedule=DEFAULT_SCHEDULE, method="penalized",
                    **kw) -> StabilityReport:
    """Check ``||phi_1 - phi_2|| <= ||f_1 - f_2|| + 2 budget``."""
    for f in (f1, f2):
        if isinstance(f, ScalarField) and f.geometry is not geom:
            raise GeometryMismatchError("obstacles must live on the same geometry")
    a = compute_envelope(geom, f1, schedule, method, **kw)
    b = compute_envelope(geom, f2, schedule, method, **kw)
    d_env = float(np.max(np.abs(a.phi_hat.values - b.phi_hat.values)))
    d_obs = float(np.max(np.abs(_f(geom, f1) - _f(geom, f2))))
    budget = max(a.error_budget, b.error_budget)
    return StabilityReport(d_env, d_obs, budget, d_env <= d_obs + 2.0 * budget)


@dataclass(frozen=True)
class ProductReport:
    sup_diff: float
    budget: float
    passed: bool
    product: EnvelopeEstimate = field(repr=False)
    factor: EnvelopeEstimate = field(repr=False)


def pullback(factor: GridGeometry, product: GridGeometry, values) -> np.ndarray:
    """Pull a field on the first factor back to the torus-2 product grid."""
    if factor.kind != "torus-1" or product.kind != "torus-2":
        raise GeometryMismatchError("pullback goes from torus-1 to torus-2")
    fa = [(a.name, a.size) for a in factor.axes]
    pa = [(a.name, a.size) for a in product.axes if a.complex_index == 0]
    if fa != pa:
        raise GeometryMismatchError(f"factor axes {fa} do not match product axes {pa}")
    v = np.asarray(values, dtype=float)
    k = len(fa)
    v = v.reshape(v.shape + (1,) * (len(product.shape) - k))
    return np.broadcast_to(v, product.shape).copy()


def product_pullback_check(factor: GridGeometry, f1, product: GridGeometry,
                           schedule=DEFAULT_SCHEDULE, factor_method="lcp", **kw) -> ProductReport:
    """Compare the torus-2 envelope of ``pi^* f1`` with ``pi^*`` of the torus-1 envelope."""
    f1v = _f(factor, f1)
    pf = pullback(factor, product, f1v)
    prod = compute_envelope(product, ScalarField(product, pf), schedule, "penalized", **kw)
    fac = compute_envelope(factor, ScalarField(factor, f1v), schedule, factor_method, **kw)
    diff = float(np.max(np.abs(prod.phi_hat.values - pullback(factor, product, fac.phi_hat.values))))
    budget = prod.error_budget + fac.error_budget
    return ProductReport(diff, budget, diff <= budget, prod, fac)


@dataclass(frozen=True)
class RateFit:
    slope: float
    r2: float
    rejected: bool


def convergence_rate_fit(eps, errors, min_r2=0.9) -> RateFit:
    """Least-squares fit ``e = C eps log(1/eps)`` through the origin.

    ``R^2`` is the usual centered coefficient ``1 - SS_res / SS_tot``; for
    constant errors ``SS_tot = 0`` and the model is rejected with ``R^2 = 0``.
    """
    eps = np.asarray(eps, dtype=float)
    e = np.asarray(errors, dtype=float)
    if eps.size < 4 or eps.size != e.size:
        raise ValueError("rate fit needs at least 4 (eps, error) pairs")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps values must be strictly decreasing")
    x = eps * np.log(1.0 / eps)
    c = float(x @ e / (x @ x))
    ss_res = float(np.sum((e - c * x) ** 2))
    ss_tot = float(np.sum((e - e.mean()) ** 2))
    if ss_tot <= 1e-30 * max(1.0, float(e @ e)):
        return RateFit(c, 0.0, True)
    r2 = 1.0 - ss_res / ss_tot
    return RateFit(c, r2, r2 < min_r2 or c <= 0)
