import math
from fractions import Fraction

import numpy as np
import pytest

from core.exact_risk import Problem, gradient, risk, risk_and_gradient
from core.instances import random_problem_1d, random_problem_nd, random_theta
from core.network_model import NetworkShape, ParamVector
from core.piecewise_poly import PiecewisePoly
from core.quadrature import QuadratureError, integrate_vector, problem_planes

from conftest import theta_1d, unit_1d


def test_constant_over_square():
    out = integrate_vector(lambda X: np.ones((X.shape[0], 1)), 2, [], 0.0, 1.0)
    assert out[0] == pytest.approx(1.0, abs=1e-14)


def test_kink_resolved_by_plane():
    def fn(X):
        return (np.maximum(X[:, 0] - X[:, 1], 0.0) ** 2)[:, None]
    out = integrate_vector(fn, 2, [(np.array([1.0, -1.0]), 0.0)], 0.0, 1.0)
    assert out[0] == pytest.approx(1 / 12, abs=1e-13)


def test_adaptive_smooth_integrand():
    out = integrate_vector(lambda X: np.exp(X), 1, [], 0.0, 1.0, adaptive=True)
    assert out[0] == pytest.approx(math.e - 1, abs=1e-12)


def test_adaptive_gives_up_on_hidden_jump():
    def step(X):
        return (X[:, :1] > 0.3).astype(float)
    with pytest.raises(QuadratureError) as err:
        integrate_vector(step, 1, [], 0.0, 1.0, order=8, adaptive=True, max_depth=0)
    assert err.value.worst_cell == (0.0, 1.0)


def test_degenerate_neuron_adds_no_plane(zero_target):
    th = theta_1d(zero_target, [0], [0], [1], 0)
    assert problem_planes(zero_target, th) == []


@pytest.mark.parametrize("seed", range(5))
def test_matches_exact_1d(seed):
    problem = random_problem_1d(seed)
    th = random_theta(problem, seed)
    L, g = risk_and_gradient(problem, th)
    Lq, gq = risk_and_gradient(problem.with_evaluator("quadrature"), th)
    assert Lq == pytest.approx(L, rel=1e-7, abs=1e-12)
    np.testing.assert_allclose(gq, g, rtol=1e-7, atol=1e-10)


def test_matches_elimination_d3():
    problem = random_problem_nd(0, 3, H=1)
    th = random_theta(problem, 0)
    assert risk(problem.with_evaluator("quadrature"), th) == pytest.approx(risk(problem, th), rel=1e-6)


def test_callable_target():
    shape = NetworkShape(1, 1, Fraction(0), Fraction(1))
    problem = Problem(shape, lambda X: np.sin(np.pi * X[:, 0]), PiecewisePoly.constant(1, 1), "quadrature")
    th = ParamVector.from_parts(shape, [[0]], [0], [0], 0)
    # int_0^1 sin^2(pi x) dx
    assert risk(problem, th) == pytest.approx(0.5, abs=1e-9)
    assert gradient(problem, th)[shape.off_c] == pytest.approx(-4 / math.pi, abs=1e-9)


def test_degenerate_rows_exactly_zero():
    problem = unit_1d(H=2, target=None, evaluator="quadrature")
    th = theta_1d(problem, [0, 1], [0, Fraction(-1, 2)], [1, 1], Fraction(1, 4))
    g = gradient(problem, th)
    assert (g[0], g[2], g[4]) == (0.0, 0.0, 0.0)
