"""Closed-form data of the CP^1 counterexample and the obstacle catalog.

The counterexample lives on (CP^1, omega_FS) with homogeneous coordinates
[z0, z1].  On the chart ``U = {|z1|^2 <= 5/4}``

    f   = (|z1|^2 - 1)^2 - log(1 + |z1|^2)
    phi = ((|z1|^2 - 1)_+)^2 - log(1 + |z1|^2)

and on ``V = {|z0|^2 <= 2}``

    f   = htilde(|z0|^2) - log(1 + |z0|^2)
    phi = h(|z0|^2) - log(1 + |z0|^2).

``phi`` is the envelope of ``f`` on U; it is C^{1,1} but its second radial
derivative jumps from 0 to 8 across |z1| = 1.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .expression import ObstacleExpr, parse_obstacle_expr
from .geometry import GridGeometry, ScalarField, field_values

T_STAR = math.sqrt(3.0) - 1.0  # root of t^2 + 2t - 2
H_FLAT = (1.0 / T_STAR - 1.0) ** 2 + math.log(T_STAR)


@dataclass(frozen=True)
class Section4Data:
    blend: tuple = (3.0 / 5.0, 4.0 / 5.0)
    cap: float = 2.0
    u_bound: float = 5.0 / 4.0   # |z1|^2 <= 5/4 on U
    v_bound: float = 2.0         # |z0|^2 <= 2 on V
    t_star: float = T_STAR


SECTION4 = Section4Data()


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 2)) or np.any(np.isnan(t)):
        raise ValueError("t must lie in [0, 2]")
    return t


def _ret(x):
    return float(x) if np.ndim(x) == 0 else x


def smoothstep(t, a=SECTION4.blend[0], b=SECTION4.blend[1]):
    """C^2 quintic step: 0 below ``a``, 1 above ``b``."""
    u = np.clip((np.asarray(t, dtype=float) - a) / (b - a), 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)


def _q(t):
    # (1/t - 1)^2 + log t, finite for t > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return (1.0 / t - 1.0) ** 2 + np.log(t)


def h_of_t(t):
    """Convex-on-[0,1] profile: constant below sqrt(3)-1, ((1/t-1)_+)^2 + log t above."""
    t = _check_t(t)
    tt = np.maximum(t, T_STAR)
    val = np.maximum(1.0 / tt - 1.0, 0.0) ** 2 + np.log(tt)
    return _ret(np.where(t <= T_STAR, H_FLAT, val))


def h_tilde_of_t(t, data: Section4Data = SECTION4):
    """Smooth majorant of h: the cap ``K`` blended into (1/t-1)^2 + log t over [3/5, 4/5]."""
    t = _check_t(t)
    chi = smoothstep(t, *data.blend)
    q = _q(np.maximum(t, data.blend[0]))
    return _ret(np.where(chi >= 1.0, q, chi * q + (1.0 - chi) * data.cap))


def f_on_U(s):
    """Obstacle on U as a function of s = |z1|^2."""
    s = np.asarray(s, dtype=float)
    return _ret((s - 1.0) ** 2 - np.log1p(s))


def f_on_V(t):
    """Obstacle on V as a function of t = |z0|^2."""
    return _ret(h_tilde_of_t(t) - np.log1p(np.asarray(t, dtype=float)))


def phi_on_U(s):
    s = np.asarray(s, dtype=float)
    return _ret(np.maximum(s - 1.0, 0.0) ** 2 - np.log1p(s))


def phi_on_V(t):
    return _ret(h_of_t(t) - np.log1p(np.asarray(t, dtype=float)))


def _by_chart(r, on_u, on_v):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(np.isnan(r)):
        raise ValueError("radius |z1| must be non-negative")
    s = r * r
    in_u = s <= SECTION4.u_bound
    with np.errstate(divide="ignore"):
        t = np.where(in_u, 1.0, 1.0 / np.where(in_u, 1.0, s))
    out = np.where(in_u, on_u(np.where(in_u, s, 0.0)), on_v(t))
    return _ret(out)


def f_section4(r):
    """Obstacle at the point(s) with |z1| = r (``r = inf`` is the point z0 = 0)."""
    return _by_chart(r, f_on_U, f_on_V)


def phi_section4(r):
    """Closed-form C^{1,1} candidate; equals the envelope of f_section4 on U."""
    return _by_chart(r, phi_on_U, phi_on_V)


def _m_to_r(m):
    m = np.asarray(m, dtype=float)
    with np.errstate(divide="ignore"):
        return np.sqrt(m / (1.0 - m))


def f_section4_m(m):
    return f_section4(_m_to_r(m))


def phi_section4_m(m):
    return phi_section4(_m_to_r(m))


# radial derivatives used by diagnostics tests (in r, on U)

def phi_section4_dr(r):
    """d phi / dr on U (continuous across r = 1, equal to -1 there)."""
    r = np.asarray(r, dtype=float)
    s = r * r
    return _ret(4.0 * r * np.maximum(s - 1.0, 0.0) - 2.0 * r / (1.0 + s))


def phi_section4_drr(r):
    """One-sided second r-derivative on U; right limit at r = 1 is 8, left limit 0."""
    r = np.asarray(r, dtype=float)
    s = r * r
    out = np.where(s > 1.0, 4.0 * (3.0 * s - 1.0), 0.0) - 2.0 * (1.0 - s) / (1.0 + s) ** 2
    return _ret(out)


# ---------------------------------------------------------------------------
# obstacle catalog

CATALOG = ("constant", "cos-wave", "gauss-bump", "cp1-section4", "from-expression", "from-file")


class ObstacleError(ValueError):
    """Obstacle incompatible with the target geometry."""


@dataclass(frozen=True)
class ObstacleSpec:
    """Catalog entry with parameters, an expression, or tabulated values."""

    name: str
    params: dict = field(default_factory=dict)
    expr: ObstacleExpr | None = None
    table: ScalarField | None = None

    @classmethod
    def catalog(cls, name, **params):
        if name not in CATALOG:
            raise ObstacleError(f"unknown catalog obstacle {name!r}")
        if name == "from-expression":
            return cls.from_expression(params["text"])
        return cls(name, params)

    @classmethod
    def from_expression(cls, text):
        return cls("from-expression", {"text": text}, expr=parse_obstacle_expr(text))

    @classmethod
    def from_field(cls, fld: ScalarField):
        return cls("table", table=fld)

    @classmethod
    def parse(cls, text: str) -> "ObstacleSpec":
        """Parse ``name(k=v, ...)``, ``expr:<expression>`` or ``file:<path>``."""
        text = text.strip()
        if text.startswith("expr:"):
            return cls.from_expression(text[5:])
        if text.startswith("file:"):
            return cls("from-file", {"path": text[5:]})
        mt = re.fullmatch(r"([\w-]+)\s*(?:\((.*)\))?", text, re.S)
        if mt is None:
            raise ObstacleError(f"cannot parse obstacle spec {text!r}")
        name, body = mt.group(1), mt.group(2)
        params = {}
        if body:
            for item in _split_args(body):
                key, _, val = item.partition("=")
                if not _:
                    raise ObstacleError(f"parameter {item!r} is not key=value")
                params[key.strip()] = _value(val.strip())
        if name == "from-expression":
            return cls.from_expression(str(params.get("text", "")))
        return cls.catalog(name, **params)

    def describe(self) -> str:
        if self.name == "table":
            return "table"
        if self.name == "from-expression":
            return f"expr:{self.params['text']}"
        inner = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.name}({inner})" if inner else self.name


def _split_args(body):
    out, depth, cur = [], 0, ""
    for ch in body:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur)
    return out


def _value(text):
    try:
        return json.loads(text.replace("(", "[").replace(")", "]"))
    except ValueError:
        return text


def _env(geom: GridGeometry):
    if geom.kind == "cp1-radial":
        return {k: geom.nodes[k] for k in ("m", "r", "t")}
    env = dict(geom.nodes)
    if geom.kind == "torus-1":
        env["x"] = env["x1"]
        if "y1" in env:
            env["y"] = env["y1"]
    return env


def eval_obstacle(spec: ObstacleSpec, geom: GridGeometry) -> ScalarField:
    """Evaluate ``spec`` at every node of ``geom``."""
    name, p = spec.name, spec.params
    if name == "table":
        if spec.table.geometry is geom:
            return spec.table
        vals = np.asarray(spec.table.values)
        if vals.shape != geom.shape:
            raise ObstacleError(f"tabulated field of shape {vals.shape} on grid {geom.shape}")
        return ScalarField(geom, vals)
    if name == "constant":
        return ScalarField(geom, np.full(geom.shape, float(p.get("c", 0.0))))
    if name == "cos-wave":
        if geom.kind == "cp1-radial":
            raise ObstacleError("cos-wave is defined on tori only")
        A, k = float(p.get("A", 1.0)), float(p.get("k", 1))
        return ScalarField(geom, A * np.cos(2 * np.pi * k * geom.nodes["x1"]))
    if name == "gauss-bump":
        return ScalarField(geom, _gauss_bump(geom, p))
    if name == "cp1-section4":
        if geom.kind != "cp1-radial":
            raise ObstacleError("cp1-section4 lives on cp1-radial grids")
        return ScalarField(geom, f_section4_m(geom.nodes["m"]))
    if name == "from-expression":
        env = _env(geom)
        missing = spec.expr.variables - set(env)
        if missing:
            raise ObstacleError(
                f"coordinate(s) {sorted(missing)} not resolvable on {geom.kind} grid {geom.shape}")
        vals = spec.expr.evaluate({k: env[k] for k in spec.expr.variables})
        return ScalarField(geom, np.broadcast_to(vals, geom.shape))
    if name == "from-file":
        from .io import read_field
        return eval_obstacle(ObstacleSpec.from_field(read_field(p["path"], geom)), geom)
    raise ObstacleError(f"unknown obstacle {name!r}")


def _gauss_bump(geom, p):
    A, sigma = float(p.get("A", 1.0)), float(p.get("sigma", 0.1))
    center = p.get("center", 0.5)
    if geom.kind == "cp1-radial":
        c = float(center if np.isscalar(center) else center[0])
        d2 = (geom.nodes["m"] - c) ** 2
    else:
        names = [a.name for a in geom.axes]
        cs = [float(center)] * len(names) if np.isscalar(center) else [float(c) for c in center]
        if len(cs) != len(names):
            raise ObstacleError(f"gauss-bump center needs {len(names)} coordinates")
        d2 = 0.0
        for nm, c in zip(names, cs):
            d = np.abs(geom.nodes[nm] - c) % 1.0
            d2 = d2 + np.minimum(d, 1.0 - d) ** 2
    return A * np.exp(-d2 / (2 * sigma * sigma))


def obstacle_values(geom, f):
    """Node values of an obstacle given as ObstacleSpec, ScalarField or array."""
    if isinstance(f, ObstacleSpec):
        return eval_obstacle(f, geom).values
    return field_values(geom, f)
