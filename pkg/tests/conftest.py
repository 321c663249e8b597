"""Shared fixtures: the CP^1 counterexample solved once per session."""
from dataclasses import dataclass

import numpy as np
import pytest

from pshenvelope import (DEFAULT_SCHEDULE, LcpProblem, ObstacleSpec, PenalizedProblem, compute_c0,
                         continuation_sweep, eval_obstacle, make_geometry, solve_envelope_lcp)
from pshenvelope.model_library import SECTION4, phi_section4_m


@dataclass
class Cp1Case:
    geom: object
    f: object
    exact: np.ndarray
    U: np.ndarray
    c0: float
    sweep: list = None
    oracle: object = None


def _case(n, sweep=True):
    geom = make_geometry("cp1-radial", n)
    f = eval_obstacle(ObstacleSpec.catalog("cp1-section4"), geom)
    m = geom.nodes["m"]
    # |z1|^2 <= 5/4  <=>  m <= 5/9
    U = m / np.where(m < 1, 1 - m, 1) <= SECTION4.u_bound
    U &= m < 1
    case = Cp1Case(geom, f, phi_section4_m(m), U, compute_c0(geom, f))
    case.oracle = solve_envelope_lcp(LcpProblem(geom, f))
    if sweep:
        case.sweep = continuation_sweep(PenalizedProblem(geom, f, DEFAULT_SCHEDULE[0]),
                                        DEFAULT_SCHEDULE)
    return case


@pytest.fixture(scope="session")
def cp1_2048():
    return _case(2048)


@pytest.fixture(scope="session")
def cp1_4096():
    return _case(4096, sweep=False)
