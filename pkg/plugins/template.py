# ===================== reluflow Plugin =====================
# Copy to plugins/<name>.py; the loader skips this file.

from core.exact_risk import risk

# Required
SUBCOMMAND  = "name"          # e.g., "risk", "simulate", "loja"
DESCRIPTION = "one line shown in --help"

# Optional
TOLERANCE = 1e-6              # whatever thresholds the subcommand asserts


def validate():
    if not SUBCOMMAND:
        raise ValueError("SUBCOMMAND is required")


def run(ctx):
    """
    - `ctx.config` is the resolved ExperimentConfig, `ctx.paths` the run's artifact paths.
    - Put everything that belongs in result.json into `ctx.result`.
    - Returns (message, is_error) where is_error=True fails the run (exit 1 + failure_report.json).
    """
    problem = ctx.config.build_problem()
    theta = ctx.config.initial_theta()

    loss = risk(problem, theta)
    ctx.result.update(loss=loss)
    ctx.emit(f"L(theta) = {loss!r}")

    if loss > TOLERANCE:
        ctx.result["failures"] = {"loss": loss}
        return (f"loss {loss:.3g} above {TOLERANCE:g}", True)
    return (f"loss {loss:.3g}", False)
