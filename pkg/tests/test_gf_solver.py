import numpy as np
import pytest

from core.gf_solver import SolverConfig, SolverError, energy_residual, frozen_field, solve
from core.instances import (c_only_problem, c_only_theta, degenerate_instance, engineered_degeneration,
                            perfect_fit, random_problem_1d, random_theta, search_degenerating_seed, unit_problem)
from core.network_model import ParamVector, degenerate_set


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(t_max=0)
    with pytest.raises(ValueError):
        SolverConfig(max_steps=1.5)
    half = SolverConfig().halved()
    assert (half.rel_tol, half.abs_tol) == (5e-10, 5e-13)


def test_c_only_matches_closed_form():
    problem = c_only_problem()
    traj = solve(problem, c_only_theta(), SolverConfig(t_max=5.0))
    th = traj.thetas
    assert np.all(th[:, :3] == 0.0)
    np.testing.assert_allclose(th[:, 3], np.exp(-2 * traj.times), atol=1e-8)
    np.testing.assert_allclose(traj.losses, np.exp(-4 * traj.times), atol=1e-8)
    for t in (0.37, 1.5, 4.2):
        assert traj.state_at(t).c == pytest.approx(np.exp(-2 * t), abs=1e-8)


def test_stationary_start_converges_immediately():
    problem, theta = perfect_fit()
    traj = solve(problem, theta)
    assert traj.status == "converged"
    assert len(traj.samples) == 1
    assert traj.losses[0] <= 1e-15


def test_descent_and_energy_identity():
    problem = unit_problem()
    theta = ParamVector.from_parts(problem.shape, [1.0], [0.0], [1.0], 0.0)
    traj = solve(problem, theta, SolverConfig(t_max=2.0))
    assert np.all(np.diff(traj.losses) <= 1e-14)
    assert energy_residual(problem, traj) <= 1e-6 * (1 + traj.losses[0])


def test_engineered_degeneration_event():
    problem, theta = engineered_degeneration()
    traj = solve(problem, theta, SolverConfig(t_max=0.05))
    assert [e.neuron for e in traj.events] == [0]
    assert 0.002 < traj.events[0].t < 0.003
    after = traj.state_at(traj.t_end)
    assert after.w[0, 0] == 0.0 and after.b[0] == 0.0
    sizes = [len(s.D) for s in traj.samples]
    assert sizes == sorted(sizes)


def test_frozen_rows_are_zero():
    problem, theta = degenerate_instance(3)
    g = frozen_field(problem, theta, degenerate_set(theta))
    s = problem.shape
    for i in degenerate_set(theta):
        assert g[i * s.d:(i + 1) * s.d].tolist() == [0.0] * s.d
        assert g[s.off_b + i] == 0.0 and g[s.off_v + i] == 0.0


def test_degenerate_set_never_shrinks():
    problem, theta = degenerate_instance(1)
    start = degenerate_set(theta)
    traj = solve(problem, theta, SolverConfig(t_max=1.0))
    for s in traj.samples:
        assert start <= s.D
        for i in s.D:
            assert ParamVector(s.theta, problem.shape).b[i] == 0.0


def test_halved_tolerances_agree():
    problem = random_problem_1d(2)
    theta = random_theta(problem, 2)
    cfg = SolverConfig(t_max=1.0)
    a = solve(problem, theta, cfg).final.theta
    b = solve(problem, theta, cfg.halved()).final.theta
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_bitwise_reproducible():
    problem = random_problem_1d(4)
    theta = random_theta(problem, 4)
    cfg = SolverConfig(t_max=0.5)
    first, second = solve(problem, theta, cfg), solve(problem, theta, cfg)
    assert np.array_equal(first.thetas, second.thetas)
    assert np.array_equal(first.times, second.times)


def test_non_finite_start_rejected():
    problem = c_only_problem()
    theta = ParamVector.from_parts(problem.shape, [1.0], [0.0], [np.nan], 0.0)
    with pytest.raises(SolverError) as err:
        solve(problem, theta)
    assert err.value.time == 0.0
    assert "non-finite" in err.value.reason


def test_max_steps_status():
    problem = random_problem_1d(0)
    traj = solve(problem, random_theta(problem, 0), SolverConfig(t_max=100.0, max_steps=3))
    assert traj.status == "max_steps"
    assert len(traj.steps) == 3


def test_state_at_outside_span():
    traj = solve(c_only_problem(), c_only_theta(), SolverConfig(t_max=0.1))
    with pytest.raises(ValueError):
        traj.state_at(0.2)


def test_seed_search_finds_degeneration():
    seed, problem, theta, traj = search_degenerating_seed(max_seeds=5)
    assert traj.events
    assert 0.0 < traj.events[0].t <= 1.0
    assert seed in range(5)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_energy_identity_random(seed):
    problem = random_problem_1d(seed)
    traj = solve(problem, random_theta(problem, seed), SolverConfig(t_max=10.0))
    assert energy_residual(problem, traj) <= 1e-6 * (1 + traj.losses[0])
    assert np.all(np.diff(traj.losses) <= 1e-12 * (1 + traj.losses[0]))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_halving_tolerances_at_t10(seed):
    problem = random_problem_1d(seed)
    theta = random_theta(problem, seed)
    cfg = SolverConfig(t_max=10.0)
    traj = solve(problem, theta, cfg)
    assert np.linalg.norm(traj.final.theta - solve(problem, theta, cfg.halved()).final.theta) <= 1e-6
