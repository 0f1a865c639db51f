# ===================== reluflow Plugin: witness =====================

from core.exact_risk import subdiff_witness
from core.report_exporter import export_json

# Required
SUBCOMMAND  = "witness"
DESCRIPTION = "Residual sequence certifying G(theta0) as a limiting subgradient"

# Optional
FINAL_TOL = 1e-6
MONOTONE_FROM = 4      # residuals must be non-increasing from this n on


def validate():
    if MONOTONE_FROM < 1:
        raise ValueError("MONOTONE_FROM must be >= 1")


def run(ctx):
    problem = ctx.config.build_problem()
    theta = ctx.config.initial_theta()
    res = subdiff_witness(problem, theta, ctx.config.diagnostics.witness_n, check_fd=True)

    tail = res.residuals[MONOTONE_FROM - 1:]
    monotone = all(b <= a for a, b in zip(tail, tail[1:]))
    payload = {"residuals": res.residuals, "final": res.final, "degenerate": list(res.degenerate),
               "fd_errors": res.fd_errors, "non_increasing_from": MONOTONE_FROM, "monotone": monotone}
    export_json(payload, ctx.paths["witness"])
    ctx.result.update(final=res.final, degenerate=list(res.degenerate), monotone=monotone,
                      n=len(res.residuals))
    ctx.emit(f"witness: {len(res.residuals)} points, degenerate={list(res.degenerate)}, final {res.final:.3g}")

    if not monotone or res.final > FINAL_TOL:
        ctx.result["failures"] = {"monotone": monotone, "final": res.final}
        return ("witness: residual sequence does not certify G", True)
    return (f"witness: final residual {res.final:.3g}", False)
