# ===================== reluflow Plugin: rates =====================

from core.convergence_diag import detect_limit, fit_rates, tail_length, verify_certificate
from core.gf_solver import solve
from core.report_exporter import export_events, export_json, export_trajectory_csv, log_table

# Required
SUBCOMMAND  = "rates"
DESCRIPTION = "Solve, detect the limit, fit and re-verify the rate certificate"

# Optional
REFINE = 10
SLACK = 0.05


def validate():
    if REFINE < 2:
        raise ValueError("REFINE must be >= 2")


def run(ctx):
    cfg = ctx.config
    problem = cfg.build_problem()
    traj = solve(problem, cfg.initial_theta(), cfg.solver)
    export_trajectory_csv(traj, ctx.paths["trajectory"])
    export_events(traj, ctx.paths["events"])

    found = detect_limit(problem, traj, g_tol=cfg.solver.g_tol)
    ctx.result.update(status=traj.status, t_end=traj.t_end, limit_reason=found.reason,
                      limit_criterion=found.criterion, limit_stall=found.stall,
                      limit_gnorm=found.gnorm, limit_diameter=found.diameter)
    if not found.converged:
        ctx.result["failures"] = {"limit": found.reason}
        return (f"rates: no limit detected ({found.reason})", True)

    cert = fit_rates(problem, traj, found.limit, cfg.diagnostics.fit_window_fraction,
                     seed=cfg.run_seed)
    check = verify_certificate(problem, traj, cert, refine=REFINE)
    sigma = tail_length(problem, traj)
    payload = cert.to_json()
    payload.update(limit_criterion=found.criterion, loss_inflation=check.loss_inflation,
                   param_inflation=check.param_inflation,
                   verified_points=check.n_points, tail_length_start=float(sigma[0]))
    export_json(payload, ctx.paths["certificate"])

    rows = [["C_loss", cert.C_loss], ["beta_hat", cert.beta_hat], ["C_param", cert.C_param],
            ["loss inflation", check.loss_inflation], ["param inflation", check.param_inflation]]
    log_table("rate certificate", ["quantity", "value"], rows)
    ctx.result.update(certificate=payload)

    ok = cert.passes and check.ok(SLACK)
    if not ok:
        ctx.result["failures"] = {"passes": cert.passes, "loss_inflation": check.loss_inflation,
                                  "param_inflation": check.param_inflation}
        return ("rates: certificate did not verify", True)
    return (f"rates: C_loss={cert.C_loss:.4g}, beta_hat={cert.beta_hat:.4g}", False)
