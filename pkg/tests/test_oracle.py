import numpy as np
import pytest
from scipy.optimize import linprog

import pshenvelope.oracle as oracle
from pshenvelope import (LcpProblem, ObstacleSpec, brute_force_envelope_small, complementarity_residual,
                         eval_obstacle, make_geometry, solve_envelope_lcp)
from pshenvelope.geometry import operator_matrices
from pshenvelope.model_library import phi_section4_m
from pshenvelope.oracle import LcpError, NoFeasiblePartitionError, _comp


def _cos(n, A):
    g = make_geometry("torus-1", n)
    return g, eval_obstacle(ObstacleSpec.catalog("cos-wave", A=A, k=1), g)


def random_obstacle(geom, rng):
    x = geom.nodes["x1"]
    f = np.zeros(geom.shape)
    for k in range(1, 4):
        f += rng.normal(0, 0.3 / k) * np.cos(2 * np.pi * k * x + rng.uniform(0, 2 * np.pi))
    return f + 0.05 * rng.standard_normal(geom.shape)


def test_admissible_obstacle_is_its_own_envelope():
    g, f = _cos(512, 0.05)
    phi = solve_envelope_lcp(LcpProblem(g, f))
    assert np.max(np.abs(phi.values - f.values)) <= 1e-8


def test_non_admissible_obstacle_leaves_contact():
    g, f = _cos(512, 0.5)
    phi = solve_envelope_lcp(LcpProblem(g, f))
    gap = f.values - phi.values
    assert np.max(gap) > 0
    assert np.count_nonzero(gap > 1e-9) > 0
    assert complementarity_residual(g, phi, f) <= 1e-9


def test_closed_form_on_U(cp1_4096):
    err = np.max(np.abs(cp1_4096.oracle.values - cp1_4096.exact)[cp1_4096.U])
    assert err <= 5e-3
    # the discretization error is O(h^2) with the calibrated constant
    assert err <= 4.0 * cp1_4096.geom.h ** 2


def test_residual_of_admissible_obstacle():
    g, f = _cos(256, 0.05)
    assert complementarity_residual(g, f, f) <= 10 * g.h ** 2


def test_residual_detects_infeasible():
    g, f = _cos(64, 0.5)
    assert complementarity_residual(g, f.values + 1, f) >= 1


def test_residual_of_closed_form(cp1_2048):
    g = cp1_2048.geom
    c = np.abs(_comp(g, cp1_2048.exact, cp1_2048.f.values))
    # on U the candidate is the envelope; measured constant 0.002 at N = 2048
    assert np.max(c[cp1_2048.U]) <= 0.01 * g.h
    # off U it is not (the cap in the blended obstacle moves the free boundary)
    assert np.max(c[~cp1_2048.U]) > 0.1


@pytest.mark.parametrize("n", [8, 10, 32])
def test_brute_force_returns_admissible_obstacle(n):
    g, f = _cos(n, 0.05)
    np.testing.assert_allclose(brute_force_envelope_small(g, f).values, f.values, atol=1e-12)


@pytest.mark.parametrize("geom", [make_geometry("torus-1", 12), make_geometry("cp1-radial", 40)],
                         ids=["torus", "cp1"])
def test_brute_force_returns_constant(geom):
    f = np.full(geom.shape, -0.7)
    np.testing.assert_allclose(brute_force_envelope_small(geom, f).values, f, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_brute_force_exhaustive_matches_psor(seed):
    g = make_geometry("torus-1", 10)
    f = random_obstacle(g, np.random.default_rng(seed))
    a = brute_force_envelope_small(g, f).values
    b = solve_envelope_lcp(LcpProblem(g, f, tol=1e-12)).values
    assert np.max(np.abs(a - b)) <= 1e-9


def test_envelope_dominates_every_subsolution():
    g = make_geometry("torus-1", 32)
    rng = np.random.default_rng(11)
    f = random_obstacle(g, rng)
    phi = brute_force_envelope_small(g, f).values
    L = operator_matrices(g)["lap"]
    for _ in range(5):
        # a vertex of the feasible set {psi <= f, 1 + L psi >= 0}
        w = rng.uniform(0.1, 1.0, g.size)
        lp = linprog(-w, A_ub=np.vstack([np.eye(g.size), -L.toarray()]),
                     b_ub=np.concatenate([f, np.ones(g.size)]), bounds=[(None, None)] * g.size)
        assert np.all(lp.x <= phi + 1e-9)


def test_brute_force_size_and_dimension_limits():
    with pytest.raises(ValueError):
        brute_force_envelope_small(make_geometry("torus-1", 65), np.zeros(65))
    with pytest.raises(ValueError):
        brute_force_envelope_small(make_geometry("torus-2", 8), np.zeros((8, 8)))


def test_no_feasible_partition(monkeypatch):
    monkeypatch.setattr(oracle, "_is_solution", lambda *a: False)
    with pytest.raises(NoFeasiblePartitionError):
        brute_force_envelope_small(make_geometry("torus-1", 8), np.zeros(8))


def test_problem_validation():
    g, f = _cos(16, 0.5)
    for omega in (0.0, 2.0):
        with pytest.raises(ValueError):
            LcpProblem(g, f, omega=omega)
    with pytest.raises(ValueError):
        LcpProblem(make_geometry("torus-2", 8), np.zeros((8, 8)))


def test_sweep_limit_reports_worst_node():
    g, f = _cos(256, 0.5)
    with pytest.raises(LcpError) as exc:
        solve_envelope_lcp(LcpProblem(g, f, max_sweeps=3, polish=False))
    assert exc.value.residual > 1e-9
    assert len(exc.value.node) == 1 and exc.value.phi is not None


def test_psor_without_polish_agrees():
    g, f = _cos(128, 0.5)
    a = solve_envelope_lcp(LcpProblem(g, f, polish=False)).values
    b = solve_envelope_lcp(LcpProblem(g, f)).values
    assert np.max(np.abs(a - b)) <= 1e-8
