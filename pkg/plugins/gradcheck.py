# ===================== reluflow Plugin: gradcheck =====================

import numpy as np

from core.batch_runner import BatchRunner
from core.exact_risk import finite_difference_gradient, gradient, relative_gradient_error
from core.instances import degenerate_instance, random_problem_1d, random_theta
from core.network_model import degenerate_set
from core.report_exporter import log_table, rich_table

# Required
SUBCOMMAND  = "gradcheck"
DESCRIPTION = "Finite-difference suite on seeded d=1 instances plus degenerate-row zeroing"

# Optional
REL_TOL = 1e-5


def validate():
    if not 0 < REL_TOL < 1:
        raise ValueError("REL_TOL must lie in (0, 1)")


def _fd_case(h):
    def case(_index, seed):
        problem = random_problem_1d(seed)
        theta = random_theta(problem, seed)
        return relative_gradient_error(finite_difference_gradient(problem, theta, h), gradient(problem, theta))
    return case


def _zeroing_case(_index, seed):
    """Offending flat indices: degenerate w/b/v components that are not exactly 0.0."""
    problem, theta = degenerate_instance(seed)
    g = gradient(problem, theta)
    s = problem.shape
    bad = []
    for i in degenerate_set(theta):
        for k in list(range(i * s.d, (i + 1) * s.d)) + [s.off_b + i, s.off_v + i]:
            if g[k] != 0.0:
                bad.append(k)
    return bad


def run(ctx):
    diag = ctx.config.diagnostics
    seeds = [diag.seed + k for k in range(diag.gradcheck_instances)]

    fd = BatchRunner("gradcheck", ctx.threads, ctx.emit, ctx.quiet).run(_fd_case(diag.gradcheck_h), seeds)
    zero = BatchRunner("zeroing", ctx.threads, ctx.emit, ctx.quiet).run(_zeroing_case, seeds)

    errors = [o.value for o in fd if o.ok]
    crashed = [seeds[o.index] for o in fd + zero if not o.ok]
    fd_bad = [seeds[o.index] for o in fd if o.ok and o.value > REL_TOL]
    zero_bad = {str(seeds[o.index]): o.value for o in zero if o.ok and o.value}
    worst = max(errors) if errors else float("nan")

    rows = [["instances", len(seeds)], ["max relative error", worst],
            ["over tolerance", len(fd_bad)], ["non-zero degenerate rows", len(zero_bad)],
            ["crashed", len(crashed)]]
    log_table("gradient check", ["check", "value"], rows)
    ctx.show(rich_table("gradient check", ["check", "value"], rows))

    ctx.result.update(instances=len(seeds), h=diag.gradcheck_h, tolerance=REL_TOL,
                      max_relative_error=worst, errors=errors,
                      median_relative_error=float(np.median(errors)) if errors else float("nan"))
    if fd_bad or zero_bad or crashed:
        ctx.result["failures"] = {"fd_over_tolerance": fd_bad, "nonzero_degenerate": zero_bad,
                                  "crashed": crashed}
        return (f"gradcheck failed: {len(fd_bad)} over tolerance, {len(zero_bad)} zeroing, "
                f"{len(crashed)} crashed", True)
    return (f"gradcheck passed on {len(seeds)} instances, max relative error {worst:.3g}", False)
