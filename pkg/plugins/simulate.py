# ===================== reluflow Plugin: simulate =====================

from core.gf_solver import energy_residual, solve
from core.report_exporter import export_events, export_trajectory_csv

# Required
SUBCOMMAND  = "simulate"
DESCRIPTION = "Integrate the gradient flow from theta0; write trajectory CSV and events JSON"

# Optional
ENERGY_TOL = 1e-6      # relative to 1 + L(theta0)
MONOTONE_SLACK = 1e-12


def validate():
    if ENERGY_TOL <= 0:
        raise ValueError("ENERGY_TOL must be > 0")


def monotone_degeneracy(traj) -> bool:
    """D at every sample contains D at every earlier sample."""
    return all(a.D <= b.D for a, b in zip(traj.samples, traj.samples[1:]))


def loss_non_increasing(traj) -> bool:
    L0 = traj.samples[0].loss
    return all(b.loss <= a.loss + MONOTONE_SLACK * (1.0 + L0) for a, b in zip(traj.samples, traj.samples[1:]))


def run(ctx):
    cfg = ctx.config
    problem = cfg.build_problem()
    traj = solve(problem, cfg.initial_theta(), cfg.solver)

    export_trajectory_csv(traj, ctx.paths["trajectory"])
    export_events(traj, ctx.paths["events"])

    L0 = traj.samples[0].loss
    residual = energy_residual(problem, traj)
    checks = {
        "energy_identity": residual <= ENERGY_TOL * (1.0 + L0),
        "monotone_degeneracy": monotone_degeneracy(traj),
        "loss_non_increasing": loss_non_increasing(traj),
    }
    ctx.result.update(status=traj.status, t_end=traj.t_end, n_samples=len(traj.samples),
                      n_events=len(traj.events), loss_start=L0, loss_end=traj.samples[-1].loss,
                      gnorm_end=traj.samples[-1].gnorm, energy_residual=residual,
                      final=[float(x) for x in traj.final.theta], checks=checks)
    ctx.emit(f"flow {traj.status} at t={traj.t_end:.6g}: L {L0:.6g} -> {traj.samples[-1].loss:.6g}, "
             f"{len(traj.events)} event(s), energy residual {residual:.3g}")

    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        ctx.result["failures"] = {"checks": failed, "energy_residual": residual}
        return (f"simulate: invariant(s) failed: {', '.join(failed)}", True)
    return (f"simulate wrote {len(traj.samples)} samples to {ctx.paths['trajectory']}", False)
