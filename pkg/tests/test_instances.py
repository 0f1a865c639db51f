from fractions import Fraction

import numpy as np
import pytest

from core.instances import (KINK_GAP, MIN_SLOPE, c_only_theta, degenerate_instance, engineered_degeneration,
                            perturbed_fit, random_problem_1d, random_problem_nd, random_theta)
from core.network_model import degenerate_set, kinks_1d


@pytest.mark.parametrize("seed", range(10))
def test_random_problem_1d_well_formed(seed):
    problem = random_problem_1d(seed)
    assert problem.shape.d == 1
    X = np.linspace(0, 1, 101)[:, None]
    assert np.all(problem.density_values(X) > 0)
    th = random_theta(problem, seed)
    assert not degenerate_set(th)
    assert np.all(np.abs(th.w) >= MIN_SLOPE)
    for k in kinks_1d(th):
        assert all(abs(k - float(t)) >= KINK_GAP for t in problem.data_breakpoints)


def test_generators_are_seeded():
    a, b = random_problem_1d(3), random_problem_1d(3)
    assert a.target == b.target and a.density == b.density
    assert random_theta(a, 3).theta.tolist() == random_theta(b, 3).theta.tolist()


@pytest.mark.parametrize("d", [2, 3])
def test_random_problem_nd(d):
    problem = random_problem_nd(0, d)
    assert problem.shape.d == d and problem.evaluator == "elimination"
    X = np.random.default_rng(0).random((200, d))
    assert np.all(problem.density_values(X) > 0)


def test_random_problem_nd_dimension_checked():
    with pytest.raises(ValueError):
        random_problem_nd(0, 4)


@pytest.mark.parametrize("seed", range(5))
def test_degenerate_instance_has_frozen_neuron(seed):
    _, theta = degenerate_instance(seed)
    assert degenerate_set(theta)


def test_fixed_instances():
    assert c_only_theta(2.0).theta.tolist() == [0.0, 0.0, 0.0, 2.0]
    problem, theta = engineered_degeneration()
    assert (problem.shape.a, problem.shape.b_dom) == (Fraction(-1), Fraction(1))
    assert theta.b[0] == 0.01
    _, perturbed = perturbed_fit(0, scale=0.1)
    assert np.max(np.abs(perturbed.theta - np.array([1.0, 0.0, 1.0, 0.0]))) <= 0.1
