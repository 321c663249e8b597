import math

import numpy as np
import pytest

from pshenvelope import (ObstacleSpec, ScalarField, eval_obstacle, f_section4, h_of_t, h_tilde_of_t,
                         laplace_beltrami, make_geometry, phi_section4)
from pshenvelope.model_library import (H_FLAT, T_STAR, ObstacleError, f_on_U, f_on_V,
                                       phi_section4_dr, phi_section4_m, smoothstep)


def test_h_examples():
    assert h_of_t(1.0) == 0.0
    assert h_of_t(2.0) == pytest.approx(math.log(2), abs=1e-15)
    # constant branch below sqrt(3) - 1
    assert h_of_t(0.5) == pytest.approx(-0.1779307619668743, abs=1e-15)
    assert h_of_t(0.0) == h_of_t(0.5) == H_FLAT


def test_h_convex_and_flat_at_breakpoint():
    t = np.linspace(0, 1, 4001)
    assert np.all(np.diff(h_of_t(t), 2) >= -1e-12)
    d = 1e-7
    assert abs((h_of_t(T_STAR + d) - h_of_t(T_STAR)) / d) < 1e-5


def test_h_tilde_examples():
    assert h_tilde_of_t(1.0) == pytest.approx(0.0, abs=1e-15)
    assert h_tilde_of_t(0.1) == 2.0
    assert h_tilde_of_t(0.9) == pytest.approx(-0.093015, abs=1e-6)


def test_h_tilde_majorizes_h():
    t = np.random.default_rng(3).uniform(0, 2, 10_000)
    assert np.all(h_tilde_of_t(t) >= h_of_t(t) - 1e-12)


def _d2_step(n):
    t = np.linspace(0.5, 0.9, n)
    d2 = np.diff(h_tilde_of_t(t), 2) / (t[1] - t[0]) ** 2
    return np.max(np.abs(np.diff(d2)))


def test_h_tilde_is_c2():
    # a continuous second derivative changes by O(h) per step; a jump would not shrink
    assert _d2_step(4001) / _d2_step(8001) == pytest.approx(2.0, rel=0.05)


@pytest.mark.parametrize("fn", [h_of_t, h_tilde_of_t])
@pytest.mark.parametrize("t", [-0.1, 2.5, float("nan")])
def test_t_out_of_range(fn, t):
    with pytest.raises(ValueError):
        fn(t)


def test_f_examples():
    assert f_section4(0.0) == pytest.approx(1.0)
    assert f_section4(1.0) == pytest.approx(-math.log(2))


def test_chart_overlap():
    s = np.random.default_rng(4).uniform(0.8, 1.25, 100)
    assert np.max(np.abs(f_on_U(s) - f_on_V(1 / s))) <= 1e-12


def test_phi_examples():
    assert phi_section4(0.0) == 0.0
    assert phi_section4(1.0) == pytest.approx(-math.log(2))
    assert phi_section4(0.5) == pytest.approx(-0.223144, abs=1e-6)


def test_phi_below_f():
    r = np.random.default_rng(5).uniform(0, 30, 10_000)
    assert np.all(phi_section4(r) - f_section4(r) <= 1e-12)
    assert phi_section4(np.inf) <= f_section4(np.inf)


def test_contact_annulus():
    s = np.linspace(1.0, 1.25, 200)
    np.testing.assert_allclose(phi_section4(np.sqrt(s)), f_section4(np.sqrt(s)), atol=1e-14)
    # beyond 5/4 the blended cap keeps f strictly above phi
    s = np.linspace(1.26, (math.sqrt(3) + 1) / 2, 50)
    assert np.all(f_section4(np.sqrt(s)) - phi_section4(np.sqrt(s)) > 0)


def test_phi_c1_at_unit_radius():
    assert phi_section4_dr(1.0) == pytest.approx(-1.0)
    d = 1e-6
    left = (phi_section4(1.0) - phi_section4(1 - d)) / d
    right = (phi_section4(1 + d) - phi_section4(1.0)) / d
    assert left == pytest.approx(-1.0, abs=1e-5)
    assert right == pytest.approx(-1.0, abs=1e-5)


def test_phi_discretely_psh():
    for n in (512, 1024):
        g = make_geometry("cp1-radial", n)
        lap = laplace_beltrami(g, phi_section4_m(g.nodes["m"])).values
        assert np.min(1 + lap) >= -10 * g.h


def test_smoothstep_ends():
    assert smoothstep(0.6) == 0.0 and smoothstep(0.8) == 1.0


def test_catalog_examples():
    g = make_geometry("torus-1", 64)
    assert np.all(eval_obstacle(ObstacleSpec.parse("constant(c=3)"), g).values == 3.0)
    cos = eval_obstacle(ObstacleSpec.parse("cos-wave(A=0.5, k=1)"), g).values
    np.testing.assert_allclose(cos, 0.5 * np.cos(2 * np.pi * g.nodes["x1"]), atol=1e-15)
    c = make_geometry("cp1-radial", 257)
    sec = eval_obstacle(ObstacleSpec.catalog("cp1-section4"), c).values
    np.testing.assert_allclose(sec, f_section4(c.nodes["r"]), atol=1e-14)


def test_expression_obstacle_matches_catalog():
    g = make_geometry("torus-1", 64)
    a = eval_obstacle(ObstacleSpec.parse("expr:0.5*cos(2*pi*x)"), g).values
    b = eval_obstacle(ObstacleSpec.parse("cos-wave(A=0.5, k=1)"), g).values
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_gauss_bump_is_periodic():
    g = make_geometry("torus-1", 64)
    v = eval_obstacle(ObstacleSpec.parse("gauss-bump(A=1, sigma=0.05, center=0.0)"), g).values
    assert v[0] == 1.0 and v[1] == pytest.approx(v[-1])


def test_catalog_errors():
    t = make_geometry("torus-1", 16)
    c = make_geometry("cp1-radial", 16)
    with pytest.raises(ObstacleError):
        ObstacleSpec.parse("volcano(A=1)")
    with pytest.raises(ObstacleError):
        eval_obstacle(ObstacleSpec.catalog("cp1-section4"), t)
    with pytest.raises(ObstacleError):
        eval_obstacle(ObstacleSpec.catalog("cos-wave"), c)
    with pytest.raises(ObstacleError):
        eval_obstacle(ObstacleSpec.parse("expr:x2"), t)
    with pytest.raises(ObstacleError):
        eval_obstacle(ObstacleSpec.from_field(ScalarField(make_geometry("torus-1", 32), np.zeros(32))), t)
