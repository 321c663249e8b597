"""Command-line interface.

Usage::

    pshenvelope SUBCOMMAND [--config PATH] [--resolution N] [--eps LIST]
                           [--method {penalized,lcp,both}] [--obstacle SPEC]
                           [--out DIR] [--seed U64]

Subcommands: solve-penalized, envelope, oracle, sweep-eps, validate-cp1,
diagnose, product-check, stability-check.  Flags override the configuration
file.  Every subcommand except validate-cp1 needs ``--config`` or
``--obstacle``.

Obstacle specs are catalog entries ``name(k=v, ...)`` (constant, cos-wave,
gauss-bump, cp1-section4), ``expr:<expression>`` or ``file:<csv path>``.
Expressions use numbers, the coordinates x y x1 y1 x2 y2 r t m, the constant
pi, ``+ - * / ^`` (``^`` binds tightest and associates to the right; unary
minus binds looser than ``^``), parentheses and the functions sin cos exp
log sqrt pospart max.

Exit codes: 0 success, 1 numerical failure or failed check, 2 configuration
error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import bound_report, grad_sup_norm, hessian_lambda1_sup, radial_second_derivative_jump
from .envelope import (DEFAULT_SCHEDULE, EnvelopeMismatchError, compute_c0, compute_envelope,
                       convergence_rate_fit, grid_tolerance, product_pullback_check, stability_check)
from .expression import ExprError
from .geometry import GeometryMismatchError, ScalarField, make_geometry
from .io import (ConfigError, RunConfig, SchemaError, config_from_mapping, load_config,
                 write_columns_csv, write_summary)
from .model_library import ObstacleError, ObstacleSpec, eval_obstacle, phi_section4_m
from .oracle import LcpError, LcpProblem, NoFeasiblePartitionError, complementarity_residual, solve_envelope_lcp
from .penalized import PenalizedProblem, PositivityError, SolveError, continuation_sweep

log = logging.getLogger("pshenvelope")

SUBCOMMANDS = ("solve-penalized", "envelope", "oracle", "sweep-eps", "validate-cp1", "diagnose",
               "product-check", "stability-check")


class CheckFailed(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pshenvelope", description="Plurisubharmonic envelopes by penalized "
                                "complex Monge-Ampere equations, with a complementarity oracle.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML key-value configuration file")
        s.add_argument("--resolution", help="grid resolution, e.g. 2048 or 16,16,16,16")
        s.add_argument("--eps", help="comma-separated decreasing eps schedule in (0, 1)")
        s.add_argument("--method", choices=("penalized", "lcp", "both"))
        s.add_argument("--obstacle", help="catalog spec, expr:<expression> or file:<path>")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int, help="seed for randomized checks")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    out = {}
    if args.resolution is not None:
        try:
            parts = [int(x) for x in args.resolution.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --resolution {args.resolution!r}") from exc
        out["resolution"] = parts[0] if len(parts) == 1 else parts
    if args.eps is not None:
        try:
            out["eps_schedule"] = [float(x) for x in args.eps.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --eps {args.eps!r}") from exc
    for key in ("method", "obstacle", "out", "seed"):
        val = getattr(args, key)
        if val is not None:
            out[key] = val
    return out


def resolve_config(args) -> RunConfig:
    base = {}
    if args.config is not None:
        base = {k: v for k, v in dataclasses.asdict(load_config(args.config)).items() if v is not None}
    elif args.command != "validate-cp1" and args.obstacle is None:
        raise ConfigError("missing configuration: pass --config PATH or --obstacle SPEC")
    if args.command == "validate-cp1":
        base["manifold"] = "cp1-radial"
        base["obstacle"] = "cp1-section4"
    merged = {**base, **_overrides(args)}
    return config_from_mapping(merged)


def _obstacle(cfg, geom, text=None):
    spec = ObstacleSpec.parse(text or cfg.obstacle)
    return eval_obstacle(spec, geom)


# ---------------------------------------------------------------------------
# commands

def _sweep(cfg, geom, f):
    return continuation_sweep(PenalizedProblem(geom, f, cfg.eps_schedule[0], **cfg.solver_options()),
                              cfg.eps_schedule)


def _summary(cfg, geom, f, phi, c0, extra=None):
    out = {
        "manifold": geom.kind,
        "resolution": list(geom.shape),
        "obstacle": cfg.obstacle,
        "c0": c0,
        "eps_schedule": list(cfg.eps_schedule),
        "sup_grad": grad_sup_norm(geom, phi),
        "sup_lambda1": hessian_lambda1_sup(geom, phi),
        "max_phi_minus_f": float(np.max(phi.values - f.values)),
        "jump_at_r1": None,
        "seed": cfg.seed,
    }
    if geom.kind == "cp1-radial":
        try:
            j = radial_second_derivative_jump(geom, phi, 1.0)
            out["jump_at_r1"] = {"left": j.left, "right": j.right, "jump": j.jump}
        except ValueError:
            pass
    out.update(extra or {})
    return out


def cmd_solve_penalized(cfg, out):
    geom = cfg.geometry()
    f = _obstacle(cfg, geom)
    sols = _sweep(cfg, geom, f)
    last = sols[-1]
    write_columns_csv(geom, {"f": f, "phi": last.phi}, out / "penalized.csv")
    extra = {"eps": last.eps, "iterations": [s.iterations for s in sols],
             "residual_sup": [s.residual_sup for s in sols], "min_eig": [s.min_eig for s in sols]}
    write_summary(_summary(cfg, geom, f, last.phi, compute_c0(geom, f), extra), out / "summary.json")
    return 0


def cmd_envelope(cfg, out):
    geom = cfg.geometry()
    f = _obstacle(cfg, geom)
    est = compute_envelope(geom, f, cfg.eps_schedule, cfg.method, lcp_options=cfg.lcp_options(),
                           **cfg.solver_options())
    write_columns_csv(geom, {"f": f, "phi": est.phi_hat, "lower": est.lower, "upper": est.upper},
                      out / "envelope.csv")
    extra = {"method": est.method, "error_budget": est.error_budget,
             "cross_check": list(est.cross_check) if est.cross_check else None}
    write_summary(_summary(cfg, geom, f, est.phi_hat, est.c0, extra), out / "summary.json")
    if est.cross_check and est.cross_check[0] > est.cross_check[1]:
        raise CheckFailed(f"methods disagree: {est.cross_check[0]:.3e} > {est.cross_check[1]:.3e}")
    return 0


def cmd_oracle(cfg, out):
    geom = cfg.geometry()
    if geom.complex_dim != 1:
        raise ConfigError("the oracle works in complex dimension one")
    f = _obstacle(cfg, geom)
    phi = solve_envelope_lcp(LcpProblem(geom, f, **cfg.lcp_options()))
    write_columns_csv(geom, {"f": f, "phi": phi}, out / "oracle.csv")
    extra = {"complementarity_residual": complementarity_residual(geom, phi, f)}
    write_summary(_summary(cfg, geom, f, phi, compute_c0(geom, f), extra), out / "summary.json")
    return 0


def _table(report):
    return {name: report.column(name) for name in
            ("eps", "sup_grad", "sup_lambda1", "sup_hessian", "max_phi_minus_f", "min_phi_minus_min_f",
             "residual_sup", "max_ok", "min_ok")}


def _write_table(table, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(table)
    with path.open("w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*table.values()):
            fh.write(",".join("%.17g" % float(v) for v in row) + "\n")


def cmd_sweep_eps(cfg, out):
    geom = cfg.geometry()
    f = _obstacle(cfg, geom)
    sols = _sweep(cfg, geom, f)
    c0 = compute_c0(geom, f)
    rep = bound_report(sols, f, c0)
    _write_table(_table(rep), out / "sweep.csv")
    for s in sols:
        write_columns_csv(geom, {"f": f, "phi": s.phi}, out / f"phi_eps_{s.eps:.3g}.csv")
    extra = {"iterations": [s.iterations for s in sols], "bounds_passed": rep.passed}
    write_summary(_summary(cfg, geom, f, sols[-1].phi, c0, extra), out / "summary.json")
    if not rep.passed:
        raise CheckFailed("a priori bound check failed")
    return 0


def cmd_diagnose(cfg, out):
    geom = cfg.geometry()
    f = _obstacle(cfg, geom)
    sols = _sweep(cfg, geom, f)
    c0 = compute_c0(geom, f)
    rep = bound_report(sols, f, c0, jump_at=1.0 if geom.kind == "cp1-radial" else None)
    sup_grad = rep.column("sup_grad")
    lam = rep.column("sup_lambda1")
    diag = {
        "table": _table(rep),
        "bounds_passed": rep.passed,
        "grad_ratio": float(np.max(sup_grad) / np.min(sup_grad)) if np.min(sup_grad) > 0 else None,
        "lambda1_last_two_ratio": float(lam[-1] / lam[-2]) if len(lam) > 1 and lam[-2] != 0 else None,
        "jumps": [{"location": j.location, "left": j.left, "right": j.right, "jump": j.jump}
                  for j in rep.jumps],
    }
    write_summary(diag, out / "diagnostics.json")
    write_summary(_summary(cfg, geom, f, sols[-1].phi, c0, {"bounds_passed": rep.passed}),
                  out / "summary.json")
    if not rep.passed:
        raise CheckFailed("a priori bound check failed")
    return 0


def _factor_geometry(geom):
    if geom.kind != "torus-2":
        raise ConfigError("product-check needs manifold = torus-2")
    if geom.reduced:
        return make_geometry("torus-1", geom.axes[0].size)
    return make_geometry("torus-1", (geom.axes[0].size, geom.axes[1].size))


def cmd_product_check(cfg, out):
    geom = cfg.geometry()
    factor = _factor_geometry(geom)
    f1 = _obstacle(cfg, factor)
    rep = product_pullback_check(factor, f1, geom, cfg.eps_schedule, **cfg.solver_options())
    write_columns_csv(geom, {"phi_product": rep.product.phi_hat}, out / "product.csv")
    write_summary({"sup_diff": rep.sup_diff, "budget": rep.budget, "passed": rep.passed,
                   "obstacle": cfg.obstacle, "eps_schedule": list(cfg.eps_schedule),
                   "resolution": list(geom.shape), "seed": cfg.seed}, out / "summary.json")
    if not rep.passed:
        raise CheckFailed(f"product law: sup difference {rep.sup_diff:.3e} > budget {rep.budget:.3e}")
    return 0


def random_bump(geom, rng, height):
    """A seeded smooth bump of sup-norm at most ``height``."""
    amp = height * rng.uniform(-1.0, 1.0)
    sigma = rng.uniform(0.03, 0.2)
    if geom.kind == "cp1-radial":
        center = float(rng.uniform(0.05, 0.95))
    else:
        center = [float(c) for c in rng.uniform(0.0, 1.0, len(geom.axes))]
    return eval_obstacle(ObstacleSpec.catalog("gauss-bump", A=amp, sigma=sigma, center=center), geom)


def cmd_stability_check(cfg, out):
    geom = cfg.geometry()
    f = _obstacle(cfg, geom)
    method = cfg.method
    rows = []
    if cfg.obstacle2 is not None:
        pairs = [_obstacle(cfg, geom, cfg.obstacle2)]
    else:
        rng = np.random.default_rng(cfg.seed)
        pairs = [ScalarField(geom, f.values + random_bump(geom, rng, cfg.bump_height).values)
                 for _ in range(cfg.trials)]
    base = compute_envelope(geom, f, cfg.eps_schedule, method, lcp_options=cfg.lcp_options(),
                            **cfg.solver_options())
    for g in pairs:
        est = compute_envelope(geom, g, cfg.eps_schedule, method, lcp_options=cfg.lcp_options(),
                               **cfg.solver_options())
        d_env = float(np.max(np.abs(est.phi_hat.values - base.phi_hat.values)))
        d_obs = float(np.max(np.abs(g.values - f.values)))
        budget = max(est.error_budget, base.error_budget)
        rows.append({"envelope_diff": d_env, "obstacle_diff": d_obs, "budget": budget,
                     "passed": d_env <= d_obs + 2 * budget})
    passed = all(r["passed"] for r in rows)
    write_summary({"trials": rows, "passed": passed, "seed": cfg.seed, "method": method,
                   "obstacle": cfg.obstacle, "eps_schedule": list(cfg.eps_schedule)}, out / "summary.json")
    if not passed:
        raise CheckFailed("stability bound violated")
    return 0


def validate_cp1(cfg, out=None, echo=print) -> dict:
    """Run the closed-form checks for the cp1 example; returns the summary dict."""
    geom = make_geometry("cp1-radial", cfg.resolution)
    f = eval_obstacle(ObstacleSpec.catalog("cp1-section4"), geom)
    m = geom.nodes["m"]
    U = m <= 5.0 / 9.0
    exact = phi_section4_m(m)
    checks = []

    def check(name, ok, value):
        checks.append({"name": name, "passed": bool(ok), "value": value})
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {value}")

    oracle = solve_envelope_lcp(LcpProblem(geom, f, **cfg.lcp_options()))
    err = float(np.max(np.abs(oracle.values - exact)[U]))
    check("closed-form match on U (<= 5e-3)", err <= 5e-3, err)

    sols = continuation_sweep(PenalizedProblem(geom, f, cfg.eps_schedule[0], **cfg.solver_options()),
                              cfg.eps_schedule)
    c0 = compute_c0(geom, f)
    fsup = float(np.max(np.abs(f.values)))
    worst = -math.inf
    for s in sols:
        lower = s.phi.values - c0 * s.eps
        upper = s.phi.values - s.eps * (math.log(s.eps) - 2 * fsup)
        worst = max(worst, float(np.max((lower - exact)[U])), float(np.max((exact - upper)[U])))
    check("sandwich contains closed form on U (slack 1e-3)", worst <= 1e-3, worst)

    rep = bound_report(sols, f, c0, tau=1e-6)
    check("max(phi_eps - f) <= C0 eps and min phi_eps >= min f (1e-6)", rep.passed,
          [float(x) for x in rep.column("max_phi_minus_f")])

    lam = rep.column("sup_lambda1")
    lam_exact = hessian_lambda1_sup(geom, exact)
    grad = rep.column("sup_grad")
    i3, i1 = _index(sols, 3e-3), _index(sols, 1e-3)
    if i3 is not None and i1 is not None:
        rel = abs(lam[i1] - lam[i3]) / abs(lam[i3])
        check("sup lambda1 at eps 1e-3 within 15% of eps 3e-3", rel <= 0.15, float(rel))
    check("sup lambda1 <= 3x closed form", float(np.max(lam)) <= 3 * lam_exact,
          [float(np.max(lam)), 3 * lam_exact])
    ratio = float(np.max(grad) / np.min(grad))
    check("sup grad max/min ratio <= 1.5", ratio <= 1.5, ratio)

    jump = radial_second_derivative_jump(geom, oracle, 1.0)
    ok = abs(jump.left) <= 0.3 and abs(jump.right - 8) <= 0.5 and abs(jump.jump - 8) <= 0.5
    check("second-derivative jump of the envelope at r = 1", ok, [jump.left, jump.right, jump.jump])
    fj = radial_second_derivative_jump(geom, f, 1.0)
    check("obstacle jump at r = 1 <= 0.1", abs(fj.jump) <= 0.1, fj.jump)

    errs = [float(np.max(np.abs(s.phi.values - oracle.values))) for s in sols]
    if len(sols) >= 4:
        fit = convergence_rate_fit([s.eps for s in sols], errs)
        dec = all(b < a for a, b in zip(errs, errs[1:]))
        check("rate fit e = C eps log(1/eps): R^2 >= 0.98, C > 0, decreasing",
              fit.r2 >= 0.98 and fit.slope > 0 and dec, [fit.slope, fit.r2])

    summary = _summary(cfg, geom, f, oracle, c0, {
        "checks": checks, "passed": all(c["passed"] for c in checks),
        "closed_form_error_on_U": err, "grid_tolerance": grid_tolerance(geom),
        "sup_lambda1_per_eps": [float(x) for x in lam], "sweep_errors": errs})
    summary["max_phi_minus_f"] = [float(x) for x in rep.column("max_phi_minus_f")]
    summary["sup_grad"] = [float(x) for x in grad]
    if out is not None:
        write_columns_csv(geom, {"f": f, "phi": oracle, "lower": sols[-1].phi.values - c0 * sols[-1].eps,
                                 "upper": sols[-1].phi.values - sols[-1].eps * (math.log(sols[-1].eps)
                                                                                - 2 * fsup)},
                          out / "envelope.csv")
        write_summary(summary, out / "summary.json")
    return summary


def _index(sols, eps):
    for i, s in enumerate(sols):
        if math.isclose(s.eps, eps, rel_tol=1e-12):
            return i
    return None


def cmd_validate_cp1(cfg, out):
    summary = validate_cp1(cfg, out)
    if not summary["passed"]:
        raise CheckFailed("one or more cp1 checks failed")
    return 0


COMMANDS = {
    "solve-penalized": cmd_solve_penalized,
    "envelope": cmd_envelope,
    "oracle": cmd_oracle,
    "sweep-eps": cmd_sweep_eps,
    "validate-cp1": cmd_validate_cp1,
    "diagnose": cmd_diagnose,
    "product-check": cmd_product_check,
    "stability-check": cmd_stability_check,
}

_CONFIG_ERRORS = (ConfigError, ObstacleError, ExprError, GeometryMismatchError, SchemaError)
_NUMERIC_ERRORS = (SolveError, PositivityError, LcpError, NoFeasiblePartitionError, EnvelopeMismatchError,
                   CheckFailed, np.linalg.LinAlgError)


def run_command(argv=None) -> int:
    """Run one subcommand; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        return COMMANDS[args.command](cfg, out)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


def main():  # pragma: no cover
    sys.exit(run_command())
