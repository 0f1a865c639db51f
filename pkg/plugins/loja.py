# ===================== reluflow Plugin: loja =====================

import math

from core.convergence_diag import (detect_limit, fit_rates, loja_probe, path_length, predicted_rate,
                                   tail_bound)
from core.exact_risk import risk
from core.gf_solver import solve
from core.report_exporter import export_events, export_json, export_trajectory_csv

# Required
SUBCOMMAND  = "loja"
DESCRIPTION = "Lojasiewicz exponent and constant probed around the flow's limit"


def validate():
    if not SUBCOMMAND:
        raise ValueError("SUBCOMMAND is required")


def run(ctx):
    cfg = ctx.config
    diag = cfg.diagnostics
    problem = cfg.build_problem()
    traj = solve(problem, cfg.initial_theta(), cfg.solver)
    export_trajectory_csv(traj, ctx.paths["trajectory"])
    export_events(traj, ctx.paths["events"])

    found = detect_limit(problem, traj, g_tol=cfg.solver.g_tol)
    if not found.converged:
        ctx.result.update(status=traj.status, limit_reason=found.reason)
        ctx.result["failures"] = {"limit": found.reason}
        return (f"loja: no limit detected ({found.reason})", True)

    est = loja_probe(problem, found.limit, diag.probe_epsilon, diag.probe_n, diag.seed,
                     coords=diag.probe_coords, threads=ctx.threads)
    cert = fit_rates(problem, traj, found.limit, diag.fit_window_fraction, seed=cfg.run_seed)
    cert.alpha_hat, cert.c_hat = est.alpha_hat, est.c_hat
    payload = cert.to_json()
    # remaining curve length from the fit window start: measured vs implied by (alpha, c)
    t0 = cert.window[0]
    gap = abs(risk(problem, traj.state_at(t0)) - cert.loss_at_limit)
    payload.update(loja=est.to_json(), predicted_rate=predicted_rate(est),
                   tail={"t": t0, "gap": gap, "length": path_length(problem, traj, t0),
                         "bound": tail_bound(est, gap)})
    export_json(payload, ctx.paths["certificate"])
    ctx.result.update(alpha_hat=est.alpha_hat, slope=est.slope, clamped=est.clamped, c_hat=est.c_hat,
                      regime=est.regime, tail=payload["tail"],
                      n_samples=est.n_samples, n_discarded=est.n_discarded)
    ctx.emit(f"alpha_hat={est.alpha_hat:.4g} (fitted slope {est.slope:.4g}{', clamped' if est.clamped else ''}) "
             f"c_hat={est.c_hat:.4g} ({est.regime}, "
             f"{est.n_samples} kept, {est.n_discarded} discarded)")

    if est.violation or not math.isfinite(est.c_hat) or not est.holds_on_samples():
        ctx.result["failures"] = {"worst_pair": est.worst_pair}
        return ("loja: inequality violated on the probe samples", True)
    return (f"loja: alpha_hat={est.alpha_hat:.4g}, c_hat={est.c_hat:.4g}", False)
