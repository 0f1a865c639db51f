import logging
import math

import numpy as np
import pytest

from core.convergence_diag import (LocallyConstantRiskError, LojaEstimate, detect_limit, fit_rates, loja_probe,
                                   path_length, predicted_rate, tail_bound, tail_length, verify_certificate)
from core.gf_solver import SolverConfig, solve
from core.instances import c_only_problem, c_only_theta, perfect_fit, perturbed_fit, unit_problem
from core.network_model import ParamVector


@pytest.fixture(scope="module")
def c_only_run():
    problem = c_only_problem()
    return problem, solve(problem, c_only_theta(), SolverConfig(t_max=10.0, g_tol=1e-9))


def test_c_only_limit_detected(c_only_run):
    problem, traj = c_only_run
    check = detect_limit(problem, traj, g_tol=1e-9)
    assert check.converged, check.reason
    assert check.criterion == "gradient"
    assert abs(check.limit.c) <= 1e-8


def test_c_only_limit_by_stall_at_default_tolerance():
    # |G| = 4.1e-9 at t = 10 misses 10 g_tol = 1e-9, but the run has stopped moving
    problem = c_only_problem()
    traj = solve(problem, c_only_theta(), SolverConfig(t_max=10.0))
    check = detect_limit(problem, traj)
    assert check.converged, check.reason
    assert check.criterion == "stall"
    assert check.stall < 1e-6
    assert abs(check.limit.c) <= 1e-8


def test_path_length_matches_tail_length(c_only_run):
    problem, traj = c_only_run
    assert path_length(problem, traj) == pytest.approx(tail_length(problem, traj)[0], rel=1e-12)
    assert path_length(problem, traj, traj.t_end) == 0.0
    # ∫_5^10 2 e^{-2s} ds
    assert path_length(problem, traj, 5.0) == pytest.approx(math.exp(-10) - math.exp(-20), rel=1e-6)


def test_short_run_not_converged():
    problem = c_only_problem()
    traj = solve(problem, c_only_theta(), SolverConfig(t_max=0.1))
    check = detect_limit(problem, traj)
    assert not check.converged
    assert "gradient norm" in check.reason or "samples" in check.reason


def test_c_only_certificate(c_only_run):
    problem, traj = c_only_run
    limit = detect_limit(problem, traj, g_tol=1e-9).limit
    cert = fit_rates(problem, traj, limit, seed=0)
    assert cert.passes
    assert cert.beta_hat > 2
    assert cert.C_loss == pytest.approx(1.0, rel=1e-9)
    check = verify_certificate(problem, traj, cert, refine=10)
    assert check.ok(0.05)
    assert check.n_points > len(traj.samples)
    assert set(cert.to_json()) >= {"limit", "C_loss", "beta_hat", "C_param", "window", "passes"}


def test_stationary_run_gives_degenerate_certificate():
    problem, theta = perfect_fit()
    traj = solve(problem, theta)
    check = detect_limit(problem, traj)
    assert check.converged
    cert = fit_rates(problem, traj, check.limit)
    assert cert.degenerate and cert.passes
    assert verify_certificate(problem, traj, cert).ok()


def test_tail_length_non_increasing(c_only_run):
    problem, traj = c_only_run
    sigma = tail_length(problem, traj)
    assert sigma.shape == traj.times.shape
    assert np.all(np.diff(sigma) <= 0)
    assert sigma[-1] == 0.0
    # |G| = 2 e^{-2t}, so the whole tail is 1 - e^{-20}
    assert sigma[0] == pytest.approx(1 - math.exp(-20), rel=1e-7)


def test_loja_half_exponent_along_c():
    problem = c_only_problem()
    est = loja_probe(problem, c_only_theta(0.0), epsilon=1e-2, n=100, seed=0, coords=[3], threads=2)
    assert est.regime == "critical" and not est.clamped
    assert 0.45 <= est.alpha_hat <= 0.55
    assert est.slope == est.alpha_hat
    assert est.c_hat == pytest.approx(0.5, rel=1e-6)
    assert est.holds_on_samples()
    assert est.coords == (3,)
    assert predicted_rate(est) == pytest.approx(1.0, rel=0.2)


def test_loja_noncritical_point(caplog):
    problem = unit_problem()
    theta = ParamVector.from_parts(problem.shape, [1.0], [0.0], [1.0], 0.0)
    with caplog.at_level(logging.WARNING, logger="core.convergence_diag"):
        est = loja_probe(problem, theta, epsilon=1e-3, n=100, seed=1)
    assert "outside" in caplog.text
    assert est.regime == "noncritical" and est.clamped
    assert est.alpha_hat == 1.0
    assert est.slope < 0.05
    assert est.to_json()["slope"] == est.slope
    assert est.holds_on_samples()
    assert math.isinf(tail_bound(est, 0.1))


def test_loja_reproducible_across_thread_counts():
    problem = c_only_problem()
    a = loja_probe(problem, c_only_theta(0.0), 1e-2, 100, seed=7, coords=[3], threads=1)
    b = loja_probe(problem, c_only_theta(0.0), 1e-2, 100, seed=7, coords=[3], threads=4)
    assert (a.alpha_hat, a.c_hat, a.worst_pair) == (b.alpha_hat, b.c_hat, b.worst_pair)


def test_loja_flat_direction_raises():
    # v of a degenerate neuron does not move the risk
    with pytest.raises(LocallyConstantRiskError):
        loja_probe(c_only_problem(), c_only_theta(0.0), 1e-2, 100, seed=0, coords=[2])


@pytest.mark.parametrize("kwargs", [dict(n=99), dict(epsilon=0.0), dict(coords=[4]), dict(seed=-1)])
def test_loja_rejects_bad_arguments(kwargs):
    args = dict(epsilon=1e-2, n=100, seed=0, coords=None)
    args.update(kwargs)
    with pytest.raises(ValueError):
        loja_probe(c_only_problem(), c_only_theta(0.0), **args)


def test_tail_bound_formula():
    est = LojaEstimate(0.5, 2.0, 1e-2, 100, 0, {}, "critical", 0)
    assert tail_bound(est, 0.25) == pytest.approx(2.0 / 0.5 * 0.5)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10))
def test_perturbed_fit_certificates(seed):
    problem, theta = perturbed_fit(seed)
    traj = solve(problem, theta, SolverConfig(t_max=40.0))
    check = detect_limit(problem, traj)
    assert check.converged, check.reason
    cert = fit_rates(problem, traj, check.limit, seed=seed)
    assert cert.passes and cert.beta_hat > 0
    assert math.isfinite(cert.C_loss) and math.isfinite(cert.C_param)
    assert verify_certificate(problem, traj, cert).ok(0.05)
