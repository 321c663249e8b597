import math
from dataclasses import replace

import numpy as np
import pytest

from pshenvelope import (ObstacleSpec, ScalarField, bound_report, eval_obstacle, grad_sup_norm,
                         hessian_lambda1_sup, make_geometry, radial_second_derivative_jump)
from pshenvelope.diagnostics import grad_norm, hessian_eigenvalues, hessian_norm_sup
from pshenvelope.model_library import f_section4_m, phi_section4_dr, phi_section4_m


@pytest.mark.parametrize("geom", [make_geometry("torus-1", 32), make_geometry("cp1-radial", 32),
                                  make_geometry("torus-2", (8, 8, 8, 8))], ids=["t1", "cp1", "t2"])
def test_constant_has_no_derivatives(geom):
    u = np.full(geom.shape, 2.0)
    assert grad_sup_norm(geom, u) == 0
    assert abs(hessian_lambda1_sup(geom, u)) < 1e-9
    assert hessian_norm_sup(geom, u) < 1e-9


def test_gradient_of_cos():
    g = make_geometry("torus-1", 512)
    u = np.cos(2 * np.pi * g.nodes["x1"])
    assert grad_sup_norm(g, u) == pytest.approx(math.pi, rel=(2 * math.pi * g.h) ** 2)


def test_gradient_of_closed_form():
    g = make_geometry("cp1-radial", 2048)
    m = g.nodes["m"]
    num = grad_norm(g, phi_section4_m(m))
    # 1000 sample nodes on U, away from the poles; |d phi|_g = (1 + r^2) |phi_r| / 2
    idx = np.unique(np.linspace(1, np.searchsorted(m, 5 / 9) - 1, 1000).astype(int))
    r = g.nodes["r"][idx]
    exact = 0.5 * (1 + r * r) * np.abs(phi_section4_dr(r))
    assert np.max(np.abs(num[idx] - exact)) <= 1e-3


def test_hessian_of_cos_wave():
    A = 0.1
    g = make_geometry("torus-1", 512)
    u = A * np.cos(2 * np.pi * g.nodes["x1"])
    assert hessian_lambda1_sup(g, u) == pytest.approx(4 * math.pi ** 2 * A, rel=(2 * math.pi * g.h) ** 2)


def test_cp1_eigenvalues_sum_to_laplacian():
    from pshenvelope import laplace_beltrami
    g = make_geometry("cp1-radial", 257)
    u = np.sin(3 * g.nodes["m"])
    top, bottom = hessian_eigenvalues(g, u)
    # different stencils for the same operator agree to O(h^2)
    np.testing.assert_allclose(top + bottom, 4 * laplace_beltrami(g, u).values, atol=20 * g.h ** 2)


def test_jump_of_closed_form():
    g = make_geometry("cp1-radial", 2048)
    rec = radial_second_derivative_jump(g, phi_section4_m(g.nodes["m"]))
    assert rec.left == pytest.approx(0.0, abs=0.2)
    assert rec.right == pytest.approx(8.0, abs=0.2)
    assert rec.jump == pytest.approx(8.0, abs=0.3)


def test_jump_detector_error_is_first_order():
    errs = []
    for n in (1024, 2048, 4096):
        g = make_geometry("cp1-radial", n)
        rec = radial_second_derivative_jump(g, phi_section4_m(g.nodes["m"]))
        errs.append(max(abs(rec.left), abs(rec.right - 8.0)))
        assert errs[-1] <= 200 * g.h
    assert errs[0] > errs[-1]


def test_smooth_obstacle_jump_vanishes():
    jumps = []
    for n in (1024, 2048, 4096):
        g = make_geometry("cp1-radial", n)
        jumps.append(abs(radial_second_derivative_jump(g, f_section4_m(g.nodes["m"])).jump))
        assert jumps[-1] <= 400 * g.h
    assert jumps[0] / jumps[-1] == pytest.approx(4.0, rel=0.25)


def test_jump_detector_errors():
    g = make_geometry("cp1-radial", 64)
    with pytest.raises(ValueError):
        radial_second_derivative_jump(g, np.zeros(64), r0=0.01)
    with pytest.raises(ValueError):
        radial_second_derivative_jump(make_geometry("torus-1", 64), np.zeros(64))


def test_bound_report_constant():
    from pshenvelope import PenalizedProblem, continuation_sweep
    g = make_geometry("torus-1", 32)
    f = np.full(32, 1.5)
    sols = continuation_sweep(PenalizedProblem(g, f, 0.1), (0.1, 0.01))
    rep = bound_report(sols, f, 0.0)
    assert rep.passed
    assert np.all(rep.column("max_phi_minus_f") == 0)
    assert np.all(rep.column("min_phi_minus_min_f") == 0)


def test_bound_report_on_sweep(cp1_2048):
    rep = bound_report(cp1_2048.sweep, cp1_2048.f, cp1_2048.c0, tau=1e-6, jump_at=1.0)
    assert rep.passed
    assert len(rep.rows) == 5 and len(rep.jumps) == 1


def test_bound_report_detects_corruption(cp1_2048):
    s = cp1_2048.sweep[-1]
    bad = replace(s, phi=ScalarField(s.geometry, cp1_2048.f.values + 1))
    rep = bound_report([bad], cp1_2048.f, cp1_2048.c0)
    assert not rep.rows[0].max_ok and not rep.passed


def test_bound_report_rejects_unconverged(cp1_2048):
    with pytest.raises(ValueError):
        bound_report([replace(cp1_2048.sweep[0], converged=False)], cp1_2048.f, cp1_2048.c0)
