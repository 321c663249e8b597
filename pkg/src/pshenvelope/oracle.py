"""Envelope in complex dimension one as a discrete complementarity problem.

For ``n = 1`` a function is omega-plurisubharmonic exactly when
``1 + Delta_omega phi >= 0``, so the discrete envelope solves

    min(f - phi, 1 + Delta_h phi) = 0    at every node.

:func:`solve_envelope_lcp` uses projected SOR with symmetric sweeps.  Far
from the solution SOR settles the free boundary slowly on fine grids, so by
default it periodically attempts a primal-dual active-set step from the
current contact set.  That step is accepted only when its output passes the
same convergence test as SOR itself.  :func:`brute_force_envelope_small`
is an independent exact solver for tiny grids.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

from .geometry import GridGeometry, ScalarField, field_values, operator_matrices
from .model_library import obstacle_values

log = logging.getLogger(__name__)


class LcpError(RuntimeError):
    """PSOR did not converge; ``node`` is the worst nodal residual location."""

    def __init__(self, message, node=None, residual=None, phi=None):
        super().__init__(message)
        self.node = node
        self.residual = residual
        self.phi = phi


class NoFeasiblePartitionError(RuntimeError):
    pass


@dataclass(frozen=True)
class LcpProblem:
    geometry: GridGeometry
    f: ScalarField
    omega: float = 1.8
    tol: float = 1e-9
    max_sweeps: int = 200000
    polish: bool = True
    polish_every: int = 50

    def __post_init__(self):
        if self.geometry.complex_dim != 1:
            raise ValueError("the complementarity form characterizes omega-psh only when n = 1")
        if not 0.0 < self.omega < 2.0:
            raise ValueError(f"relaxation factor must lie in (0, 2), got {self.omega}")
        if not isinstance(self.f, ScalarField):
            object.__setattr__(self, "f", ScalarField(self.geometry,
                                                      obstacle_values(self.geometry, self.f)))


@numba.njit(cache=True)
def _psor_sweep(indptr, indices, data, diag, f, phi, omega, reverse):
    n = phi.shape[0]
    delta = 0.0
    for k in range(n):
        i = n - 1 - k if reverse else k
        s = 1.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s += data[p] * phi[j]
        # solve 1 + (L phi)_i = 0 for phi_i, relax, project onto phi <= f
        gs = -s / diag[i]
        new = phi[i] + omega * (gs - phi[i])
        if new > f[i]:
            new = f[i]
        d = abs(new - phi[i])
        if d > delta:
            delta = d
        phi[i] = new
    return delta


def complementarity_residual(geom: GridGeometry, phi, f) -> float:
    """``sup |min(f - phi, 1 + Delta_h phi)|`` over all nodes."""
    if geom.complex_dim != 1:
        raise ValueError("complementarity residual is defined for n = 1")
    return float(np.max(np.abs(_comp(geom, field_values(geom, phi), obstacle_values(geom, f)))))


def _comp(geom, p, fv):
    L = operator_matrices(geom)["lap"]
    w = 1.0 + (L @ np.ravel(p)).reshape(geom.shape)
    return np.minimum(fv - p, w)


def _active_set_solve(L, f, active, diag_scale):
    """Primal-dual active-set iteration from an initial contact set.

    An oversized contact set shrinks by a node or two per step at each
    free-boundary point, so up to ``n`` steps are allowed; a repeated set
    means cycling and aborts.
    """
    n = f.size
    ones = np.ones(n)
    seen = set()
    for _ in range(max(100, n)):
        key = active.tobytes()
        if key in seen:
            return None
        seen.add(key)
        phi = _partition_solve(L, f, active, ones)
        if phi is None:
            return None
        w = 1.0 + L @ phi
        s = f - phi
        new = w - diag_scale * s > 0
        if np.array_equal(new, active):
            return phi
        active = new
    return None


def _partition_solve(L, f, active, ones=None):
    """Solve ``phi = f`` on ``active`` and ``(L phi)_i = -1`` elsewhere."""
    n = f.size
    a = active.astype(float)
    A = sp.diags(a) + sp.diags(1.0 - a) @ L
    rhs = np.where(active, f, -1.0)
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError:
        return None
    phi = lu.solve(rhs)
    # one step of refinement against the assembled system
    phi += lu.solve(rhs - A @ phi)
    return phi if np.all(np.isfinite(phi)) else None


def roundoff_floor(L, f) -> float:
    """Smallest complementarity residual resolvable in double precision.

    ``1 + (L phi)_i`` is a sum of terms of size ``|L_ij| |phi_j|``, so rounding
    ``phi`` alone leaves an error of order ``u ||L||_inf max|phi|``.  On fine
    cp1 grids this exceeds 1e-9.
    """
    row = float(np.max(np.abs(L).sum(axis=1)))
    return 4.0 * np.finfo(float).eps * row * (1.0 + float(np.max(np.abs(f))))


def solve_envelope_lcp(problem: LcpProblem, initial=None) -> ScalarField:
    """Discrete n = 1 envelope by projected SOR with symmetric sweeps.

    Converged when both the sweep update and the complementarity residual are
    below ``max(problem.tol, roundoff_floor)``.  Raises :class:`LcpError` after ``max_sweeps``.
    """
    geom = problem.geometry
    L = operator_matrices(geom)["lap"].tocsr()
    L.sort_indices()
    diag = L.diagonal()
    f = np.ascontiguousarray(np.ravel(problem.f.values), dtype=float)
    phi = f.copy() if initial is None else np.minimum(np.ravel(field_values(geom, initial)), f).copy()
    scale = float(np.max(np.abs(diag)))
    tol = max(problem.tol, roundoff_floor(L, f))
    for sweep in range(1, problem.max_sweeps + 1):
        delta = _psor_sweep(L.indptr, L.indices, L.data, diag, f, phi, problem.omega, sweep % 2 == 0)
        if delta < tol:
            res = np.max(np.abs(np.minimum(f - phi, 1.0 + L @ phi)))
            if res < tol:
                log.debug("psor converged in %d sweeps", sweep)
                return ScalarField(geom, phi.reshape(geom.shape))
        if problem.polish and sweep % problem.polish_every == 0:
            active = phi >= f - 10 * tol
            cand = _active_set_solve(L, f, active, scale)
            if cand is not None:
                cand = np.minimum(cand, f)
                trial = cand.copy()
                delta = _psor_sweep(L.indptr, L.indices, L.data, diag, f, trial, problem.omega, False)
                res = np.max(np.abs(np.minimum(f - trial, 1.0 + L @ trial)))
                if delta < tol and res < tol:
                    log.debug("active-set step accepted after %d sweeps", sweep)
                    return ScalarField(geom, trial.reshape(geom.shape))
    r = np.abs(np.minimum(f - phi, 1.0 + L @ phi))
    worst = int(np.argmax(r))
    node = tuple(int(i) for i in np.unravel_index(worst, geom.shape))
    raise LcpError(f"PSOR did not converge in {problem.max_sweeps} sweeps; worst residual "
                   f"{r[worst]:.3e} at node {node}", node, float(r[worst]),
                   ScalarField(geom, phi.reshape(geom.shape)))


# ---------------------------------------------------------------------------
# exact small-grid solver

BRUTE_FORCE_LIMIT = 64
EXHAUSTIVE_LIMIT = 12


def _is_solution(L, f, phi, tol):
    w = 1.0 + L @ phi
    s = f - phi
    scale = 1.0 + np.max(np.abs(f))
    return bool(np.all(s >= -tol * scale) and np.all(w >= -tol * scale)
                and np.max(np.abs(np.minimum(s, w))) <= tol * scale)


def brute_force_envelope_small(geom: GridGeometry, f, tol: float = 1e-10) -> ScalarField:
    """Exact discrete envelope by contact-set enumeration (at most 64 nodes).

    Up to 12 nodes every partition is tried.  Beyond that the contact set is
    read off the linear program ``max sum(phi)`` subject to ``phi <= f`` and
    ``-Delta_h phi <= 1``, then the partition is solved exactly and checked;
    ambiguous nodes are flipped one at a time if the check fails.
    """
    if geom.complex_dim != 1:
        raise ValueError("brute force applies to n = 1")
    if geom.size > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} nodes, grid has {geom.size}")
    L = operator_matrices(geom)["lap"].tocsr()
    fv = np.ravel(obstacle_values(geom, f)).astype(float)
    n = fv.size
    if geom.size <= EXHAUSTIVE_LIMIT:
        for bits in itertools.product((False, True), repeat=n):
            active = np.array(bits)
            phi = _partition_solve(L, fv, active)
            if phi is not None and _is_solution(L, fv, phi, tol):
                return ScalarField(geom, phi.reshape(geom.shape))
        raise NoFeasiblePartitionError("no complementary partition found")
    lp = linprog(-np.ones(n), A_ub=sp.vstack([sp.identity(n), -L]).tocsr(),
                 b_ub=np.concatenate([fv, np.ones(n)]), bounds=[(None, None)] * n,
                 method="highs")
    if lp.status != 0:
        raise NoFeasiblePartitionError(f"linear program failed: {lp.message}")
    gap = fv - lp.x
    active = gap <= 1e-7 * (1.0 + np.abs(fv))
    phi = _partition_solve(L, fv, active)
    if phi is not None and _is_solution(L, fv, phi, tol):
        return ScalarField(geom, phi.reshape(geom.shape))
    slack = 1.0 + L @ lp.x
    ambiguous = np.argsort(np.minimum(gap, np.abs(slack)))[:min(n, 16)]
    for i in ambiguous:
        trial = active.copy()
        trial[i] = ~trial[i]
        phi = _partition_solve(L, fv, trial)
        if phi is not None and _is_solution(L, fv, phi, tol):
            return ScalarField(geom, phi.reshape(geom.shape))
    raise NoFeasiblePartitionError("no complementary partition found near the LP contact set")
