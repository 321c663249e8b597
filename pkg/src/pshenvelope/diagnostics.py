"""A priori bound checks and free-boundary diagnostics.

Norms use the Riemannian metric ``g_{z zbar} (dx^2 + dy^2)`` per complex
direction.  On a flat torus this is the Euclidean metric, so the gradient
norm ``|d phi|_g = (g^{j kbar} phi_j phi_kbar)^{1/2}`` is half the Euclidean
gradient length.  On cp1-radial grids the S^1-invariant Hessian is
diagonal in the radial/angular frame with eigenvalues

    lambda_theta = 2 (1 - 2m) phi_m
    lambda_r     = 2 (1 - 2m) phi_m + 4 m (1 - m) phi_mm

in the variable ``m = r^2 / (1 + r^2)``; their sum is ``4 Delta_omega phi``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (GridGeometry, cp1_m_derivatives, field_values, first_derivatives,
                       real_hessian)
from .model_library import obstacle_values


def _vals(geom, phi):
    return np.asarray(field_values(geom, phi), dtype=float)


def grad_norm(geom: GridGeometry, phi) -> np.ndarray:
    """Pointwise ``|d phi|_g`` with centered differences."""
    u = _vals(geom, phi)
    if geom.kind == "cp1-radial":
        m = geom.nodes["m"]
        pm, _ = cp1_m_derivatives(geom, u)
        return np.sqrt(m * (1.0 - m)) * np.abs(pm)
    # |phi_z|^2 = (phi_x^2 + phi_y^2) / 4 on each factor
    return 0.5 * np.sqrt(sum(d * d for d in first_derivatives(geom, u)))


def grad_sup_norm(geom: GridGeometry, phi) -> float:
    return float(np.max(grad_norm(geom, phi)))


def hessian_eigenvalues(geom: GridGeometry, phi) -> tuple:
    """Pointwise (largest, smallest) eigenvalues of the real covariant Hessian."""
    u = _vals(geom, phi)
    if geom.kind == "cp1-radial":
        m = geom.nodes["m"]
        pm, pmm = cp1_m_derivatives(geom, u)
        lt = 2.0 * (1.0 - 2.0 * m) * pm
        lr = lt + 4.0 * m * (1.0 - m) * pmm
        return np.maximum(lt, lr), np.minimum(lt, lr)
    ev = np.linalg.eigvalsh(real_hessian(geom, u))
    return ev[..., -1], ev[..., 0]


def hessian_lambda1_sup(geom: GridGeometry, phi) -> float:
    """Signed sup of the largest Hessian eigenvalue."""
    return float(np.max(hessian_eigenvalues(geom, phi)[0]))


def hessian_norm_sup(geom: GridGeometry, phi) -> float:
    """``sup |nabla^2 phi|_g`` recovered as ``max(lambda_1, -lambda_min)``."""
    top, bottom = hessian_eigenvalues(geom, phi)
    return float(max(np.max(top), np.max(-bottom)))


@dataclass(frozen=True)
class JumpRecord:
    location: float
    left: float
    right: float

    @property
    def jump(self) -> float:
        return self.right - self.left


def _second_derivative(x, y):
    # exact quadratic through three points
    x0, x1, x2 = x
    y0, y1, y2 = y
    return 2.0 * ((y2 - y1) / (x2 - x1) - (y1 - y0) / (x1 - x0)) / (x2 - x0)


def radial_second_derivative_jump(geom: GridGeometry, phi, r0: float = 1.0, skip: int = 2,
                                  width: int = 3) -> JumpRecord:
    """One-sided second r-derivatives of a radial field at ``|z1| = r0``.

    On each side the ``skip`` nodes nearest ``r0`` are ignored and a
    quadratic is fitted through the next ``width = 3`` nodes.
    """
    if geom.kind != "cp1-radial":
        raise ValueError("jump detector needs a cp1-radial field")
    if width != 3:
        raise ValueError("fits use exactly three nodes per side")
    u = _vals(geom, phi)
    m = geom.nodes["m"]
    inner = m < 1.0
    r = np.full_like(m, np.inf)
    r[inner] = np.sqrt(m[inner] / (1.0 - m[inner]))
    left = np.where(r < r0)[0][::-1]
    right = np.where((r > r0) & np.isfinite(r))[0]
    need = skip + width
    # keep the stencils off the poles, where r is not a smooth coordinate
    left = left[left > 0]
    if left.size < need or right.size < need + 1:
        raise ValueError(f"r0 = {r0} is too close to an end of the grid for the stencil")
    li = np.sort(left[skip:need])
    ri = right[skip:need]
    return JumpRecord(float(r0), float(_second_derivative(r[li], u[li])),
                      float(_second_derivative(r[ri], u[ri])))


@dataclass(frozen=True)
class BoundRow:
    eps: float
    sup_grad: float
    sup_lambda1: float
    sup_hessian: float
    max_phi_minus_f: float
    min_phi_minus_min_f: float
    residual_sup: float
    max_ok: bool
    min_ok: bool


@dataclass(frozen=True)
class DiagnosticsReport:
    rows: tuple
    c0: float
    tau: float
    jumps: tuple = field(default=())

    @property
    def passed(self) -> bool:
        return all(r.max_ok and r.min_ok for r in self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def bound_report(solutions, f, c0: float, tau: float = 1e-6, jump_at=None) -> DiagnosticsReport:
    """Check ``max(phi - f) <= C0 eps + tau`` and ``min phi >= min f - tau`` per eps.

    ``jump_at`` (cp1-radial only) adds jump records for the last solution.
    """
    rows = []
    sols = sorted(solutions, key=lambda s: -s.eps)
    for s in sols:
        if not s.converged:
            raise ValueError(f"solution at eps={s.eps} did not converge")
        geom = s.geometry
        fv = np.asarray(obstacle_values(geom, f), dtype=float)
        p = s.phi.values
        top = float(np.max(p - fv))
        low = float(np.min(p) - np.min(fv))
        rows.append(BoundRow(s.eps, grad_sup_norm(geom, p), hessian_lambda1_sup(geom, p),
                             hessian_norm_sup(geom, p), top, low, s.residual_sup,
                             top <= c0 * s.eps + tau, low >= -tau))
    jumps = ()
    if jump_at is not None and sols:
        jumps = tuple(radial_second_derivative_jump(sols[-1].geometry, sols[-1].phi, r0)
                      for r0 in np.atleast_1d(jump_at))
    return DiagnosticsReport(tuple(rows), float(c0), float(tau), jumps)
