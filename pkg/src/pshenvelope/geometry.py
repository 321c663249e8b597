"""Grids, metric data and finite-difference operators on the model manifolds.

Three kinds of grid are supported:

``cp1-radial``
    S^1-invariant functions on (CP^1, omega_FS), sampled on a uniform grid in
    ``m = r^2 / (1 + r^2)`` with ``r = |z_1|``.  In this variable the
    Fubini-Study Laplacian is ``d/dm (m (1 - m) du/dm)`` and the area form is
    ``dm dtheta``.  Node ``i`` uses the chart ``z_1`` when ``m <= 1/2`` and the
    chart ``z_0 = 1/z_1`` otherwise, so the metric coefficient is bounded away
    from zero everywhere.

``torus-1`` / ``torus-2``
    Flat tori C^k / (Z + iZ)^k with the identity metric.  Each complex
    direction ``z_j = x_j + i y_j`` contributes one or two periodic real axes.
    An integer resolution gives the y-invariant reduced grid (x axes only);
    functions that do not depend on the y coordinates are represented exactly
    there, because every operator below commutes with y-translations.  A full
    tuple ``(Nx1, Ny1[, Nx2, Ny2])`` gives the full grid.

Conventions: ``g_{j kbar}`` is the Hermitian metric, ``u_{j kbar} =
d^2 u / dz_j dzbar_k`` and ``Delta_omega u = g^{j kbar} u_{j kbar}``, so on a
flat torus ``Delta_omega u = (u_xx + u_yy) / 4``.  The Riemannian metric used
for gradient and Hessian norms is ``g_{z zbar} (dx^2 + dy^2)`` per complex
direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

KINDS = ("cp1-radial", "torus-1", "torus-2")
MIN_RESOLUTION = 8


class GeometryMismatchError(ValueError):
    """A field or operator was applied on a grid it does not belong to."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Axis:
    name: str
    complex_index: int
    part: str  # "x" or "y"
    size: int

    @property
    def h(self) -> float:
        return 1.0 / self.size


@dataclass(frozen=True, eq=False)
class GridGeometry:
    """Discretized model manifold.  Immutable; compare by identity."""

    kind: str
    resolution: tuple
    complex_dim: int
    nodes: dict
    metric_coeff: np.ndarray
    volume_density: np.ndarray
    connection: np.ndarray
    axes: tuple = ()
    chart: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple:
        if self.kind == "cp1-radial":
            return (self.resolution[0],)
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple:
        """Grid step per axis (in m for cp1-radial, in x/y for tori)."""
        if self.kind == "cp1-radial":
            return (1.0 / (self.resolution[0] - 1),)
        return tuple(a.h for a in self.axes)

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def reduced(self) -> bool:
        """True for y-invariant torus grids (no y axes)."""
        return self.kind != "cp1-radial" and all(a.part == "x" for a in self.axes)

    def axis_index(self, complex_index: int, part: str):
        for i, a in enumerate(self.axes):
            if a.complex_index == complex_index and a.part == part:
                return i
        return None

    def coordinate(self, name: str) -> np.ndarray:
        aliases = {"x": "x1", "y": "y1"} if self.kind == "torus-1" else {}
        key = name if name in self.nodes else aliases.get(name, name)
        if key not in self.nodes:
            raise KeyError(name)
        return self.nodes[key]

    @cached_property
    def volume_weights(self) -> np.ndarray:
        """Quadrature weights of the Riemannian volume, normalized to sum 1."""
        if self.kind == "cp1-radial":
            w = np.full(self.shape, 1.0)
            w[0] = w[-1] = 0.5
        else:
            w = np.ones(self.shape)
        return _frozen(w / w.sum())

    def __repr__(self):
        return f"GridGeometry({self.kind!r}, resolution={self.resolution})"


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples bound to one geometry."""

    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.geometry.shape:
            if v.size != self.geometry.size:
                raise GeometryMismatchError(
                    f"{v.size} values for a grid of {self.geometry.size} nodes")
            v = v.reshape(self.geometry.shape)
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise ValueError(f"non-finite value at node {tuple(int(i) for i in bad)}")
        object.__setattr__(self, "values", _frozen(v.copy()))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.geometry, values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def field_values(geom: GridGeometry, u) -> np.ndarray:
    """Node values of ``u`` (ScalarField or array) after checking it lives on ``geom``."""
    if isinstance(u, ScalarField):
        if u.geometry is not geom:
            raise GeometryMismatchError("field is bound to a different geometry")
        return u.values
    v = np.asarray(u, dtype=float)
    if v.shape != geom.shape:
        if v.size != geom.size:
            raise GeometryMismatchError(
                f"array of shape {v.shape} does not match grid shape {geom.shape}")
        v = v.reshape(geom.shape)
    return v


def make_geometry(kind: str, resolution, params: dict | None = None) -> GridGeometry:
    """Build a grid of the given kind.

    ``resolution`` is a node count per axis.  For cp1-radial it is the number
    of nodes in m (endpoints included).  For tori an integer gives the
    reduced y-invariant grid; a tuple with one entry per real axis
    ``(x1, y1, x2, y2)`` gives the full grid.
    """
    params = dict(params or {})
    if kind not in KINDS:
        raise ValueError(f"unsupported manifold kind {kind!r}; expected one of {KINDS}")
    if kind == "cp1-radial":
        res = _as_tuple(resolution)
        if len(res) != 1:
            raise ValueError("cp1-radial takes a single node count")
        return _make_cp1(res[0], params)
    k = 1 if kind == "torus-1" else 2
    res = _as_tuple(resolution)
    if len(res) == 1:
        res = res * k
        parts = ["x"] * k
        cidx = list(range(k))
    elif len(res) == k and k == 2:
        parts = ["x", "x"]
        cidx = [0, 1]
    elif len(res) == 2 * k:
        parts = ["x", "y"] * k
        cidx = [j for j in range(k) for _ in (0, 1)]
    else:
        raise ValueError(f"{kind} takes 1, {k} (reduced) or {2 * k} (full) node counts")
    for n in res:
        if n < MIN_RESOLUTION:
            raise ValueError(f"resolution {n} below the minimum {MIN_RESOLUTION} per axis")
    axes = tuple(Axis(f"{p}{j + 1}", j, p, int(n)) for p, j, n in zip(parts, cidx, res))
    return _make_torus(kind, k, axes, params)


def _as_tuple(resolution):
    if np.isscalar(resolution):
        return (int(resolution),)
    return tuple(int(n) for n in resolution)


def _make_cp1(n: int, params) -> GridGeometry:
    if n < MIN_RESOLUTION:
        raise ValueError(f"resolution {n} below the minimum {MIN_RESOLUTION}")
    m = np.linspace(0.0, 1.0, n)
    chart = np.where(m <= 0.5, 0, 1)  # 0: z1 chart, 1: z0 chart
    with np.errstate(divide="ignore"):
        s = m / (1.0 - m)        # |z1|^2, inf at m = 1
        t = (1.0 - m) / m        # |z0|^2, inf at m = 0
    r = np.sqrt(s)
    # g = 1/(1+|z|^2)^2 in the active chart: (1-m)^2 for z1, m^2 for z0
    g = np.where(chart == 0, (1.0 - m) ** 2, m ** 2)
    # Levi-Civita symbols of lambda^2 (dx^2 + dy^2), lambda^2 = g, at the
    # representative point z = |z| on the positive real axis of the chart:
    # Gamma^x_xx = -Gamma^x_yy = Gamma^y_xy = Gamma^y_yx = d(log lambda)/dx
    sig = -2.0 * np.sqrt(m * (1.0 - m))
    conn = np.zeros((n, 2, 2, 2))
    conn[:, 0, 0, 0] = sig
    conn[:, 0, 1, 1] = -sig
    conn[:, 1, 0, 1] = sig
    conn[:, 1, 1, 0] = sig
    nodes = {"m": _frozen(m), "s": _frozen(s), "r": _frozen(r), "t": _frozen(t)}
    return GridGeometry(
        kind="cp1-radial",
        resolution=(n,),
        complex_dim=1,
        nodes=nodes,
        metric_coeff=_frozen(g.reshape(n, 1, 1).astype(complex)),
        volume_density=_frozen(g),
        connection=_frozen(conn),
        chart=_frozen(chart),
        params=params,
    )


def _make_torus(kind, k, axes, params) -> GridGeometry:
    shape = tuple(a.size for a in axes)
    grids = np.meshgrid(*[np.arange(a.size) / a.size for a in axes], indexing="ij")
    nodes = {a.name: _frozen(gr) for a, gr in zip(axes, grids)}
    metric = np.broadcast_to(np.eye(k, dtype=complex), shape + (k, k))
    return GridGeometry(
        kind=kind,
        resolution=shape,
        complex_dim=k,
        nodes=nodes,
        metric_coeff=_frozen(metric),
        volume_density=_frozen(np.ones(shape)),
        connection=_frozen(np.zeros(shape + (2 * k, 2 * k, 2 * k))),
        axes=axes,
        params=params,
    )


# ---------------------------------------------------------------------------
# stencils

def _shift(u, axis, k):
    # value at index i + k (periodic)
    return np.roll(u, -k, axis=axis)


def _d1(u, axis, h):
    return (_shift(u, axis, 1) - _shift(u, axis, -1)) / (2.0 * h)


def _d2(u, axis, h):
    return (_shift(u, axis, 1) - 2.0 * u + _shift(u, axis, -1)) / (h * h)


def _cp1_laplacian(u, h):
    n = u.shape[0]
    m = np.linspace(0.0, 1.0, n)
    mid = 0.5 * (m[1:] + m[:-1])
    a = mid * (1.0 - mid)
    flux = a * (u[1:] - u[:-1])
    out = np.empty_like(u)
    out[1:-1] = (flux[1:] - flux[:-1]) / (h * h)
    # at the poles Delta u = +/- du/dm; one-sided second-order differences
    out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
    out[-1] = -(3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    return out


def laplace_beltrami(geom: GridGeometry, u) -> ScalarField:
    """Discrete ``Delta_omega u = g^{j kbar} u_{j kbar}`` with centered O(h^2) stencils."""
    return ScalarField(geom, laplace_values(geom, field_values(geom, u)))


def laplace_values(geom: GridGeometry, u: np.ndarray) -> np.ndarray:
    if geom.kind == "cp1-radial":
        return _cp1_laplacian(u, geom.spacing[0])
    out = np.zeros(geom.shape)
    for i, a in enumerate(geom.axes):
        out += _d2(u, i, a.h)
    return 0.25 * out


def complex_hessian(geom: GridGeometry, u) -> np.ndarray:
    """Complex Hessian ``u_{j kbar}`` per node, shape ``grid + (n, n)``, exactly Hermitian.

    On cp1-radial the single entry is expressed in the chart active at each
    node, ``u_{z zbar} = g Delta_omega u``.
    """
    return hessian_values(geom, field_values(geom, u))


def hessian_values(geom: GridGeometry, u: np.ndarray) -> np.ndarray:
    n = geom.complex_dim
    if geom.kind == "cp1-radial":
        g = geom.volume_density
        return (g * _cp1_laplacian(u, geom.spacing[0])).astype(complex).reshape(geom.shape + (1, 1))
    H = np.zeros(geom.shape + (n, n), dtype=complex)

    def second(ia, ib):
        if ia is None or ib is None:
            return 0.0
        a, b = geom.axes[ia], geom.axes[ib]
        if ia == ib:
            return _d2(u, ia, a.h)
        return _d1(_d1(u, ia, a.h), ib, b.h)

    for j in range(n):
        xj, yj = geom.axis_index(j, "x"), geom.axis_index(j, "y")
        for k in range(n):
            xk, yk = geom.axis_index(k, "x"), geom.axis_index(k, "y")
            re = second(xj, xk) + second(yj, yk)
            im = second(xj, yk) - second(yj, xk) if j != k else 0.0
            H[..., j, k] = 0.25 * (re + 1j * np.asarray(im))
    # enforce exact Hermitian symmetry
    return 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))


def first_derivatives(geom: GridGeometry, u: np.ndarray) -> list:
    """Centered first differences along each real axis (torus grids)."""
    return [_d1(u, i, a.h) for i, a in enumerate(geom.axes)]


def real_hessian(geom: GridGeometry, u: np.ndarray) -> np.ndarray:
    """Euclidean real Hessian on a torus in the full (x1, y1, ..., xn, yn) frame.

    Rows/columns belonging to axes absent from a reduced grid are zero.
    """
    n = geom.complex_dim
    full = [(j, p) for j in range(n) for p in ("x", "y")]
    idx = [geom.axis_index(j, p) for j, p in full]
    out = np.zeros(geom.shape + (2 * n, 2 * n))
    for a, ia in enumerate(idx):
        for b, ib in enumerate(idx):
            if b < a or ia is None or ib is None:
                continue
            if ia == ib:
                val = _d2(u, ia, geom.axes[ia].h)
            else:
                val = _d1(_d1(u, ia, geom.axes[ia].h), ib, geom.axes[ib].h)
            out[..., a, b] = val
            out[..., b, a] = val
    return out


def cp1_m_derivatives(geom: GridGeometry, u: np.ndarray):
    """Second-order first and second m-derivatives on the cp1-radial grid."""
    h = geom.spacing[0]
    d1 = np.empty_like(u)
    d2 = np.empty_like(u)
    d1[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    d1[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    d1[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
    d2[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / (h * h)
    d2[0] = (2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]) / (h * h)
    d2[-1] = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / (h * h)
    return d1, d2


# ---------------------------------------------------------------------------
# sparse operator matrices (Newton Jacobians, PSOR)

def _circulant_d2(n, h):
    e = np.ones(n)
    A = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], shape=(n, n), format="lil")
    A[0, n - 1] = 1.0
    A[n - 1, 0] = 1.0
    return A.tocsr() / (h * h)


def _circulant_d1(n, h):
    e = np.ones(n)
    A = sp.diags([-e[:-1], e[:-1]], [-1, 1], shape=(n, n), format="lil")
    A[0, n - 1] = -1.0
    A[n - 1, 0] = 1.0
    return A.tocsr() / (2 * h)


def _on_axis(geom, i, D):
    mats = [sp.identity(a.size, format="csr") for a in geom.axes]
    mats[i] = D
    out = mats[0]
    for M in mats[1:]:
        out = sp.kron(out, M, format="csr")
    return out


def _cp1_matrix(n):
    h = 1.0 / (n - 1)
    m = np.linspace(0.0, 1.0, n)
    mid = 0.5 * (m[1:] + m[:-1])
    a = mid * (1.0 - mid) / (h * h)
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [a[i - 1], -(a[i - 1] + a[i]), a[i]]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 1, n - 2, n - 3]
    c = 1.0 / (2 * h)
    vals += [-3 * c, 4 * c, -c, -3 * c, 4 * c, -c]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def operator_matrices(geom: GridGeometry) -> dict:
    """Sparse matrices of the linear pieces of the complex Hessian.

    Keys: ``"lap"`` (Delta_omega, any n) and, for tori, ``("re", j, k)`` and
    ``("im", j, k)`` with ``u_{j kbar} = (re + i im) u`` for ``j <= k``.
    """
    cache = geom.params.setdefault("_matrices", {})
    if cache:
        return cache
    if geom.kind == "cp1-radial":
        cache["lap"] = _cp1_matrix(geom.shape[0])
        return cache
    n = geom.complex_dim
    N = geom.size

    def second(ia, ib):
        if ia is None or ib is None:
            return sp.csr_matrix((N, N))
        a, b = geom.axes[ia], geom.axes[ib]
        if ia == ib:
            return _on_axis(geom, ia, _circulant_d2(a.size, a.h))
        return _on_axis(geom, ia, _circulant_d1(a.size, a.h)) @ _on_axis(
            geom, ib, _circulant_d1(b.size, b.h))

    lap = sp.csr_matrix((N, N))
    for j in range(n):
        xj, yj = geom.axis_index(j, "x"), geom.axis_index(j, "y")
        for k in range(j, n):
            xk, yk = geom.axis_index(k, "x"), geom.axis_index(k, "y")
            re = 0.25 * (second(xj, xk) + second(yj, yk))
            cache[("re", j, k)] = re.tocsr()
            if j != k:
                cache[("im", j, k)] = (0.25 * (second(xj, yk) - second(yj, xk))).tocsr()
            else:
                lap = lap + re
    cache["lap"] = lap.tocsr()
    return cache
