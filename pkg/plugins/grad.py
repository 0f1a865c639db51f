# ===================== reluflow Plugin: grad =====================

import numpy as np

from core.exact_risk import SmoothedFamily, gradient, smoothed_gradient
from core.network_model import degenerate_set
from core.report_exporter import log_table, rich_table

# Required
SUBCOMMAND  = "grad"
DESCRIPTION = "Generalized gradient at theta0 and its distance to the smoothed-risk gradients"

# Optional
FINAL_R = 1e4
FINAL_TOL = 1e-3


def validate():
    if not FINAL_TOL > 0:
        raise ValueError("FINAL_TOL must be > 0")


def run(ctx):
    """
    - Prints G(theta0) and |grad L_r(theta0) - G(theta0)| for every r in diagnostics.smoothing_rs.
    - At a non-degenerate theta the distances must shrink strictly with r, and
      once r reaches FINAL_R the last one must be within FINAL_TOL.
    """
    diag = ctx.config.diagnostics
    problem = ctx.config.build_problem()
    theta = ctx.config.initial_theta()

    g = gradient(problem, theta)
    ctx.emit(f"G(theta) = {np.array2string(g, precision=10, separator=', ')}")

    family = SmoothedFamily(diag.smoothing_gamma)
    rs = sorted(diag.smoothing_rs)
    dists = [float(np.linalg.norm(smoothed_gradient(problem, theta, r, family) - g)) for r in rs]
    rows = list(zip(rs, dists))
    log_table("smoothed gradient distance", ["r", "|grad L_r - G|"], rows)
    ctx.show(rich_table("smoothed gradient distance", ["r", "|grad L_r - G|"], rows))

    dead = sorted(degenerate_set(theta))
    decreasing = all(b < a for a, b in zip(dists, dists[1:]))
    close = rs[-1] < FINAL_R or dists[-1] <= FINAL_TOL
    ctx.result.update(gradient=[float(x) for x in g], gnorm=float(np.linalg.norm(g)),
                      smoothing={"gamma": family.gamma, "r": rs, "distance": dists,
                                 "strictly_decreasing": decreasing, "within_tolerance": close},
                      degenerate=dead)

    if not dead and not decreasing:
        ctx.result["failures"] = {"smoothing_distance": dists}
        return ("smoothed-gradient distance is not strictly decreasing in r", True)
    if not dead and not close:
        ctx.result["failures"] = {"smoothing_distance": dists, "gamma": family.gamma}
        return (f"smoothed-gradient distance {dists[-1]:.3g} at r={rs[-1]:g} exceeds {FINAL_TOL:g} "
                f"(gamma={family.gamma:g})", True)
    return (f"|G| = {np.linalg.norm(g):.6g}; smoothed distance at r={rs[-1]:g}: {dists[-1]:.3g}", False)
