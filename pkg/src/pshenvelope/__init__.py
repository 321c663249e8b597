"""Plurisubharmonic envelopes on model compact Hermitian manifolds.

The envelope of an obstacle ``f`` is the largest omega-plurisubharmonic
function below ``f``.  It is approximated by solutions of the penalized
complex Monge-Ampere equation

    (omega + i ddbar phi)^n = exp((phi - f) / eps) omega^n,

with two-sided error bars, and in complex dimension one it is also computed
directly as a discrete complementarity problem.
"""
from .diagnostics import (DiagnosticsReport, JumpRecord, bound_report, grad_sup_norm,
                          hessian_lambda1_sup, radial_second_derivative_jump)
from .envelope import (DEFAULT_SCHEDULE, EnvelopeEstimate, compute_c0, compute_envelope,
                       convergence_rate_fit, product_pullback_check, sandwich_bounds, stability_check)
from .expression import ObstacleExpr, parse_obstacle_expr
from .geometry import (GeometryMismatchError, GridGeometry, ScalarField, complex_hessian,
                       laplace_beltrami, make_geometry)
from .io import RunConfig, parse_config, read_field, write_field_csv, write_summary
from .model_library import (ObstacleSpec, eval_obstacle, f_section4, h_of_t, h_tilde_of_t,
                            phi_section4)
from .oracle import LcpProblem, brute_force_envelope_small, complementarity_residual, solve_envelope_lcp
from .penalized import (PenalizedProblem, PenalizedSolution, PositivityError, SolveError,
                        continuation_sweep, ma_residual, solve_penalized)

__version__ = "0.1.0"
