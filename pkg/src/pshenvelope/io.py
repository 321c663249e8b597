"""Run configuration, CSV field files and JSON summaries.

Fields are written as CSV with a header row.  The coordinate columns come
first (``m, r`` on cp1-radial grids, the axis names on tori), then the
value columns.  Floats use ``%.17g``, so reading a file back reproduces
every double exactly.
"""
from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .geometry import KINDS, MIN_RESOLUTION, GeometryMismatchError, GridGeometry, ScalarField, make_geometry

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

COORD_NAMES = ("m", "r", "x1", "y1", "x2", "y2")
MAX_RESOLUTION = {"cp1-radial": 1 << 16, "torus-1": 1 << 14, "torus-2": 1 << 10}
DEFAULT_RESOLUTION = {"cp1-radial": 2048, "torus-1": 512, "torus-2": 64}
DEFAULT_SEED = 1729


class ConfigError(ValueError):
    """Invalid run configuration (exit code 2)."""


class SchemaError(ValueError):
    """Field file does not match the expected layout."""


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class RunConfig:
    manifold: str = "cp1-radial"
    resolution: object = None
    obstacle: str = "constant(c=0)"
    obstacle2: str | None = None
    eps_schedule: tuple = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
    method: str = "penalized"
    newton_tol: float = 1e-10
    newton_max_iter: int = 60
    lcp_tol: float = 1e-9
    lcp_omega: float = 1.8
    lcp_max_sweeps: int = 200000
    trials: int = 100
    bump_height: float = 0.1
    out: str = "out"
    seed: int = DEFAULT_SEED

    def geometry(self) -> GridGeometry:
        return make_geometry(self.manifold, self.resolution)

    def solver_options(self) -> dict:
        return {"tol": self.newton_tol, "max_iter": self.newton_max_iter}

    def lcp_options(self) -> dict:
        return {"tol": self.lcp_tol, "omega": self.lcp_omega, "max_sweeps": self.lcp_max_sweeps}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps_schedule"] = list(self.eps_schedule)
        if isinstance(self.resolution, tuple):
            d["resolution"] = list(self.resolution)
        return d


_ALIASES = {"N": "resolution", "eps": "eps_schedule", "schedule": "eps_schedule"}
_KEYS = {f.name for f in fields(RunConfig)}


def _schedule(value):
    vals = [value] if isinstance(value, (int, float)) else value
    if not isinstance(vals, (list, tuple)) or not vals:
        raise ConfigError("eps schedule must be a number or a non-empty list")
    out = []
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"eps value {v!r} is not a finite number")
        if not 0.0 < v < 1.0:
            raise ConfigError(f"eps value {v} outside (0, 1)")
        out.append(float(v))
    if any(b >= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"eps schedule {out} must be strictly decreasing")
    return tuple(out)


def _resolution(kind, value):
    if value is None:
        return DEFAULT_RESOLUTION[kind]
    parts = [value] if isinstance(value, int) else value
    if isinstance(value, bool) or not isinstance(parts, (list, tuple)) or not parts:
        raise ConfigError(f"bad resolution {value!r}")
    for p in parts:
        if isinstance(p, bool) or not isinstance(p, int):
            raise ConfigError(f"resolution entries must be integers, got {p!r}")
        if not MIN_RESOLUTION <= p <= MAX_RESOLUTION[kind]:
            raise ConfigError(f"resolution {p} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION[kind]}] for {kind}")
    if isinstance(value, int):
        return value
    allowed = {"cp1-radial": (1,), "torus-1": (1, 2), "torus-2": (1, 2, 4)}[kind]
    if len(parts) not in allowed:
        raise ConfigError(f"{kind} resolution takes {allowed} entries, got {len(parts)}")
    if len(parts) == 1:
        return parts[0]
    if kind == "torus-2" and len(parts) == 2:
        if parts[0] != parts[1]:
            raise ConfigError("reduced torus-2 grids must be square")
        return parts[0]
    return tuple(parts)


def config_from_mapping(raw: dict) -> RunConfig:
    """Validate a key-value mapping and fill defaults."""
    data = {}
    for key, val in raw.items():
        name = _ALIASES.get(key, key)
        if name not in _KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        if name in data:
            raise ConfigError(f"key {key!r} given twice")
        data[name] = val
    kind = data.get("manifold", "cp1-radial")
    if kind not in KINDS:
        raise ConfigError(f"manifold must be one of {KINDS}, got {kind!r}")
    data["manifold"] = kind
    data["resolution"] = _resolution(kind, data.get("resolution"))
    if "eps_schedule" in data:
        data["eps_schedule"] = _schedule(data["eps_schedule"])
    method = data.get("method", "penalized")
    if method not in ("penalized", "lcp", "both"):
        raise ConfigError(f"method must be penalized, lcp or both, got {method!r}")
    if method != "penalized" and kind == "torus-2":
        raise ConfigError(f"method {method!r} needs complex dimension one")
    for key in ("newton_tol", "lcp_tol", "bump_height"):
        if key in data:
            v = data[key]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"{key} must be a positive number")
            data[key] = float(v)
    if "lcp_omega" in data and not 0.0 < float(data["lcp_omega"]) < 2.0:
        raise ConfigError("lcp_omega must lie in (0, 2)")
    for key in ("newton_max_iter", "lcp_max_sweeps", "trials"):
        if key in data and (isinstance(data[key], bool) or not isinstance(data[key], int) or data[key] < 1):
            raise ConfigError(f"{key} must be a positive integer")
    if "seed" in data:
        s = data["seed"]
        if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
    for key in ("obstacle", "obstacle2", "out"):
        if key in data and not isinstance(data[key], str):
            raise ConfigError(f"{key} must be a string")
    return RunConfig(**data)


def parse_config(text: str) -> RunConfig:
    """Parse a TOML key-value document into a validated :class:`RunConfig`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    for key, val in raw.items():
        if isinstance(val, dict):
            raise ConfigError(f"tables are not supported (key {key!r})")
    return config_from_mapping(raw)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# fields

def coordinate_columns(geom: GridGeometry) -> dict:
    if geom.kind == "cp1-radial":
        return {"m": geom.nodes["m"], "r": geom.nodes["r"]}
    return {a.name: np.asarray(geom.nodes[a.name]) for a in geom.axes}


def _fmt(x):
    return "%.17g" % x


def write_columns_csv(geom: GridGeometry, columns: dict, path) -> Path:
    """Write coordinate columns followed by ``columns`` (name -> node values)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = dict(coordinate_columns(geom))
    for name, vals in columns.items():
        if name in cols:
            raise SchemaError(f"column {name!r} clashes with a coordinate")
        v = np.asarray(vals.values if isinstance(vals, ScalarField) else vals, dtype=float)
        if v.shape != geom.shape:
            raise SchemaError(f"column {name!r} has shape {v.shape}, grid is {geom.shape}")
        cols[name] = v
    flat = [np.broadcast_to(np.asarray(v, dtype=float), geom.shape).ravel() for v in cols.values()]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(cols))
        for row in zip(*flat):
            w.writerow([_fmt(x) for x in row])
    return path


def write_field_csv(fld: ScalarField, path, name: str = "phi", extra: dict | None = None) -> Path:
    """Write one field (plus optional extra columns) with its node coordinates."""
    columns = dict(extra or {})
    columns[name] = fld.values
    if extra and "f" in extra and name == "phi":
        # conventional order: obstacle before the solution, bounds after
        order = ["f", "phi"] + [k for k in extra if k != "f"]
        columns = {k: columns[k] for k in order}
    return write_columns_csv(fld.geometry, columns, path)


def read_columns_csv(path) -> dict:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path} is empty")
    header = rows[0]
    if len(set(header)) != len(header):
        raise SchemaError(f"duplicate column names in {path}")
    data = rows[1:]
    for i, row in enumerate(data):
        if len(row) != len(header):
            raise SchemaError(f"row {i + 2} of {path} has {len(row)} entries, header has {len(header)}")
    try:
        arr = np.array([[float(x) for x in row] for row in data], dtype=float).reshape(len(data), len(header))
    except ValueError as exc:
        raise SchemaError(f"non-numeric entry in {path}: {exc}") from exc
    return {h: arr[:, j] for j, h in enumerate(header)}


def _infer_geometry(cols):
    if "m" in cols:
        return make_geometry("cp1-radial", len(cols["m"]))
    names = [n for n in ("x1", "y1", "x2", "y2") if n in cols]
    sizes = {n: len(np.unique(cols[n])) for n in names}
    if names == ["x1"]:
        return make_geometry("torus-1", sizes["x1"])
    if names == ["x1", "y1"]:
        return make_geometry("torus-1", (sizes["x1"], sizes["y1"]))
    if names == ["x1", "x2"] and sizes["x1"] == sizes["x2"]:
        return make_geometry("torus-2", sizes["x1"])
    if names == ["x1", "y1", "x2", "y2"]:
        return make_geometry("torus-2", tuple(sizes[n] for n in names))
    raise SchemaError(f"cannot infer a grid from coordinate columns {names}")


def read_field(path, geom: GridGeometry | None = None, column: str | None = None) -> ScalarField:
    """Read a field written by :func:`write_field_csv`.

    The coordinates must match ``geom`` (inferred from the columns when not
    given).  ``column`` defaults to ``phi``, else the first value column.
    """
    cols = read_columns_csv(path)
    if geom is None:
        geom = _infer_geometry(cols)
    expect = coordinate_columns(geom)
    for name, vals in expect.items():
        if name not in cols:
            raise SchemaError(f"{path} lacks coordinate column {name!r} for a {geom.kind} grid")
        got = cols[name]
        want = np.broadcast_to(vals, geom.shape).ravel()
        if got.size != want.size:
            raise GeometryMismatchError(f"{path} has {got.size} rows, grid has {want.size} nodes")
        fin = np.isfinite(want)
        if not (np.array_equal(np.isfinite(got), fin) and np.allclose(got[fin], want[fin], rtol=0, atol=1e-12)):
            raise GeometryMismatchError(f"coordinate column {name!r} in {path} does not match the grid")
    values = [h for h in cols if h not in COORD_NAMES]
    if column is None:
        column = "phi" if "phi" in cols else (values[0] if values else None)
    if column is None or column not in cols:
        raise SchemaError(f"{path} has no value column {column!r}")
    return ScalarField(geom, cols[column].reshape(geom.shape))


# ---------------------------------------------------------------------------
# summaries

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def write_summary(report: dict, path) -> Path:
    """Write a JSON summary (sorted keys, full precision, deterministic)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return path


SUMMARY_KEYS = ("c0", "eps_schedule", "sup_grad", "sup_lambda1", "max_phi_minus_f", "jump_at_r1", "seed")
