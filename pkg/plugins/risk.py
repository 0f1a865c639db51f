# ===================== reluflow Plugin: risk =====================

from core.exact_risk import risk
from core.network_model import degenerate_set

# Required
SUBCOMMAND  = "risk"
DESCRIPTION = "Risk L(theta0) under the configured evaluator"

# Optional
EXACT_EVALUATORS = {"exact-1d"}    # evaluators that also report the rational-arithmetic value


def validate():
    if not SUBCOMMAND:
        raise ValueError("SUBCOMMAND is required")


def run(ctx):
    """
    - Evaluates the risk at the configured initial theta.
    - Returns (message, is_error); the risk itself never fails the run.
    """
    problem = ctx.config.build_problem()
    theta = ctx.config.initial_theta()

    loss = risk(problem, theta)
    ctx.result.update(loss=loss, evaluator=problem.evaluator,
                      theta=[float(t) for t in theta.theta],
                      degenerate=sorted(degenerate_set(theta)))
    if problem.evaluator in EXACT_EVALUATORS:
        ctx.result["loss_exact"] = risk(problem, theta, exact=True)

    ctx.emit(f"L(theta) = {loss!r}")
    return (f"risk = {loss:.17g} ({problem.evaluator})", False)
