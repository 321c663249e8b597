"""Damped Newton solver for the penalized complex Monge-Ampere equation.

Solves, for ``0 < eps < 1``,

    det(g + phi_{j kbar}) / det(g) = exp((phi - f) / eps),   g + phi_{j kbar} > 0,

on a grid from :mod:`pshenvelope.geometry`.

Numerical notes
---------------
Away from the contact set the right-hand side is of order ``exp(-1/eps)``,
far below what a difference quotient of O(1) node values can resolve.  The
solver therefore

* keeps the iterate in extended precision (``numpy.longdouble``) and forms
  the volume ratio ``mu`` and density ``rho = exp((phi - f)/eps)`` there;
* measures convergence with the floored log residual
  ``log((mu + d) / (rho + d))``, ``d = density_floor``.  Where
  ``rho >> d`` this is the log-form residual ``log mu - (phi - f)/eps``;
  where ``rho << d`` it is the density defect ``(mu - rho) / d``;
* linearizes the density form ``mu - rho`` (Jacobian ``cof(g~) D^2 - rho/eps``,
  an inverse-negative matrix), solved in double precision.  Each step is
  halved until the residual sup-norm decreases and the smallest eigenvalue
  of ``g^{-1} g~`` stays above ``-positivity_slack``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import (GridGeometry, ScalarField, field_values, hessian_values,
                       laplace_values, operator_matrices)

log = logging.getLogger(__name__)

LD = np.longdouble


class PositivityError(ValueError):
    """g + phi_{j kbar} is not positive definite at some node."""

    def __init__(self, node, value):
        super().__init__(f"g + i ddbar phi not positive at node {node} (min eigenvalue ratio {value:.3e})")
        self.node = node
        self.value = value


class SolveError(RuntimeError):
    """Newton iteration failed; carries the last residual and the offending eps."""

    def __init__(self, message, eps=None, residual=None, solution=None):
        super().__init__(message)
        self.eps = eps
        self.residual = residual
        self.solution = solution


@dataclass(frozen=True)
class PenalizedProblem:
    geometry: GridGeometry
    f: ScalarField
    eps: float
    tol: float = 1e-10
    max_iter: int = 60
    max_halvings: int = 40
    positivity_slack: float = 1e-10
    density_floor: float = 1e-2

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not isinstance(self.f, ScalarField):
            object.__setattr__(self, "f", ScalarField(self.geometry, self.f))
        elif self.f.geometry is not self.geometry:
            raise ValueError("obstacle is bound to a different geometry")

    def at(self, eps) -> "PenalizedProblem":
        return PenalizedProblem(self.geometry, self.f, eps, self.tol, self.max_iter,
                                self.max_halvings, self.positivity_slack, self.density_floor)


@dataclass(frozen=True)
class PenalizedSolution:
    eps: float
    phi: ScalarField
    tilde_metric: np.ndarray
    residual_sup: float
    log_residual_sup: float
    min_eig: float
    iterations: int
    converged: bool
    residual_history: tuple = ()
    min_eig_history: tuple = ()
    phi_ext: np.ndarray = field(default=None, repr=False)

    @property
    def geometry(self):
        return self.phi.geometry


# ---------------------------------------------------------------------------
# pointwise quantities

def _metric_terms(geom, phi):
    """Return (mu, min_eig, tilde_metric, cofactor data) for the iterate ``phi``.

    ``mu = det(g + H)/det g``; ``min_eig`` is the smallest eigenvalue of
    ``g^{-1}(g + H)``.
    """
    n = geom.complex_dim
    if n == 1:
        mu = 1 + laplace_values(geom, phi)
        return mu, mu, None
    H = hessian_values(geom, phi)
    a = 1 + H[..., 0, 0].real
    d = 1 + H[..., 1, 1].real
    b = H[..., 0, 1]
    bb = b.real ** 2 + b.imag ** 2
    mu = a * d - bb
    half = 0.5 * (a + d)
    min_eig = half - np.sqrt(0.25 * (a - d) ** 2 + bb)
    return mu, min_eig, (a, d, b)


def tilde_metric_field(geom: GridGeometry, phi) -> np.ndarray:
    """Samples of ``g + phi_{j kbar}`` (chart coefficients on cp1-radial)."""
    H = hessian_values(geom, np.asarray(field_values(geom, phi), dtype=float))
    return np.asarray(geom.metric_coeff) + H


def ma_residual(geom: GridGeometry, phi, f, eps) -> ScalarField:
    """Log-form residual ``log det(g + phi_{jk}) - log det g - (phi - f)/eps``."""
    p = np.asarray(field_values(geom, phi), dtype=float)
    fv = np.asarray(field_values(geom, f), dtype=float)
    mu, min_eig, _ = _metric_terms(geom, p)
    bad = (min_eig <= 0) | (mu <= 0)
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise PositivityError(node, float(np.min(min_eig)))
    return ScalarField(geom, np.log(mu) - (p - fv) / eps)


def _density(phi, f, eps):
    with np.errstate(over="ignore"):
        return np.exp((phi - f) / eps)


def _floored_residual(mu, rho, floor):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log((mu + floor) / (rho + floor))


# ---------------------------------------------------------------------------
# linear algebra

def _jacobian(geom, mats, terms, rho, eps):
    diag = sp.diags(np.asarray(rho / eps, dtype=float).ravel())
    if geom.complex_dim == 1:
        return mats["lap"] - diag
    a, d, b = terms
    J = (sp.diags(np.asarray(d, float).ravel()) @ mats[("re", 0, 0)]
         + sp.diags(np.asarray(a, float).ravel()) @ mats[("re", 1, 1)]
         - 2 * sp.diags(np.asarray(b.real, float).ravel()) @ mats[("re", 0, 1)]
         - 2 * sp.diags(np.asarray(b.imag, float).ravel()) @ mats[("im", 0, 1)])
    return J - diag


def _banded(J):
    J = J.tocoo()
    off = J.col - J.row
    lo, up = int(max(0, -off.min())), int(max(0, off.max()))
    ab = np.zeros((lo + up + 1, J.shape[0]))
    ab[up + J.row - J.col, J.col] = J.data
    return (lo, up), ab


_DIRECT_LIMIT = 20000


def _linear_solve(geom, J, rhs):
    if geom.kind == "cp1-radial":
        lu, ab = _banded(J)
        return sla.solve_banded(lu, ab, rhs)
    J = J.tocsc()
    if J.shape[0] <= _DIRECT_LIMIT:
        # minimum degree on A^T + A keeps fill low for the 4-D stencils
        return spla.splu(J, permc_spec="MMD_AT_PLUS_A").solve(rhs)
    M = spla.spilu(J, drop_tol=1e-4, fill_factor=20)
    pre = spla.LinearOperator(J.shape, M.solve)
    x, info = spla.gmres(J, rhs, M=pre, rtol=1e-12, atol=0.0, restart=50, maxiter=50)
    if info != 0:
        raise SolveError(f"linear solver did not converge (info={info})")
    return x


# ---------------------------------------------------------------------------

def solve_penalized(problem: PenalizedProblem, warm_start=None) -> PenalizedSolution:
    """Solve the penalized equation at ``problem.eps``.

    The default start is the constant ``min f``, which is admissible
    (``g~ = g``) and a subsolution.  Raises :class:`SolveError` when the
    residual does not reach ``problem.tol`` within ``max_iter`` steps.
    """
    geom = problem.geometry
    eps = LD(problem.eps)
    floor = LD(problem.density_floor)
    f = np.asarray(problem.f.values, dtype=LD)
    mats = operator_matrices(geom)
    if warm_start is None:
        phi = np.full(geom.shape, f.min(), dtype=LD)
    elif isinstance(warm_start, PenalizedSolution) and warm_start.phi_ext is not None:
        phi = np.array(warm_start.phi_ext, dtype=LD)
    else:
        src = warm_start.phi if isinstance(warm_start, PenalizedSolution) else warm_start
        phi = np.array(field_values(geom, src), dtype=LD)

    mu, min_eig, terms = _metric_terms(geom, phi)
    if np.min(min_eig) < -problem.positivity_slack:
        raise PositivityError(tuple(int(i) for i in np.argwhere(min_eig == min_eig.min())[0]),
                              float(min_eig.min()))
    rho = _density(phi, f, eps)
    res = _floored_residual(mu, rho, floor)
    rsup = float(np.max(np.abs(res)))
    hist, eig_hist = [rsup], [float(np.min(min_eig))]
    it = 0
    while rsup > problem.tol:
        if it >= problem.max_iter:
            sol = _package(problem, phi, f, hist, eig_hist, it, converged=False)
            raise SolveError(f"no convergence after {it} Newton steps at eps={problem.eps} "
                             f"(residual {rsup:.3e})", problem.eps, rsup, sol)
        J = _jacobian(geom, mats, terms, rho, eps)
        step = _linear_solve(geom, J, -np.asarray(mu - rho, dtype=float).ravel())
        step = step.reshape(geom.shape).astype(LD)
        t = LD(1)
        for _ in range(problem.max_halvings + 1):
            trial = phi + t * step
            mu_t, eig_t, terms_t = _metric_terms(geom, trial)
            if np.min(eig_t) >= -problem.positivity_slack:
                rho_t = _density(trial, f, eps)
                res_t = _floored_residual(mu_t, rho_t, floor)
                r_t = float(np.max(np.abs(res_t)))
                if np.isfinite(r_t) and r_t < rsup:
                    break
            t /= 2
        else:
            sol = _package(problem, phi, f, hist, eig_hist, it, converged=False)
            raise SolveError(f"line search failed at eps={problem.eps} (residual {rsup:.3e})",
                             problem.eps, rsup, sol)
        phi, mu, terms, rho, rsup = trial, mu_t, terms_t, rho_t, r_t
        hist.append(rsup)
        eig_hist.append(float(np.min(eig_t)))
        it += 1
        log.debug("eps=%g it=%d step=%g residual=%.3e", problem.eps, it, float(t), rsup)
    return _package(problem, phi, f, hist, eig_hist, it, converged=True)


def _package(problem, phi, f, hist, eig_hist, it, converged):
    geom = problem.geometry
    mu, min_eig, _ = _metric_terms(geom, phi)
    x = (phi - f) / LD(problem.eps)
    resolved = x >= np.log(problem.density_floor)
    if np.any(resolved):
        with np.errstate(invalid="ignore", divide="ignore"):
            lr = np.abs(np.log(mu[resolved]) - x[resolved])
        log_res = float(np.max(lr))
    else:
        log_res = 0.0
    phi64 = np.asarray(phi, dtype=float)
    H = hessian_values(geom, phi)
    gt = np.asarray(np.asarray(geom.metric_coeff) + H, dtype=complex)
    return PenalizedSolution(
        eps=float(problem.eps),
        phi=ScalarField(geom, phi64),
        tilde_metric=gt,
        residual_sup=hist[-1],
        log_residual_sup=log_res,
        min_eig=float(np.min(min_eig)),
        iterations=it,
        converged=converged,
        residual_history=tuple(hist),
        min_eig_history=tuple(eig_hist),
        phi_ext=phi,
    )


def continuation_sweep(problem: PenalizedProblem, schedule) -> list:
    """Solve along a strictly decreasing eps schedule, warm-starting each solve."""
    schedule = [float(e) for e in schedule]
    if not schedule:
        raise ValueError("empty eps schedule")
    for e in schedule:
        if not 0.0 < e < 1.0:
            raise ValueError(f"eps {e} outside (0, 1)")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    out = []
    warm = None
    for e in schedule:
        try:
            sol = solve_penalized(problem.at(e), warm_start=warm)
        except SolveError as exc:
            exc.eps = e
            raise
        out.append(sol)
        warm = sol
    return out
