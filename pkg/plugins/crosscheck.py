# ===================== reluflow Plugin: crosscheck =====================

from core.batch_runner import BatchRunner
from core.exact_risk import risk
from core.instances import random_problem_1d, random_problem_nd, random_theta
from core.report_exporter import log_table, rich_table

# Required
SUBCOMMAND  = "crosscheck"
DESCRIPTION = "Evaluator agreement: exact-1d and elimination against the quadrature oracle"

# Optional
TOLERANCES = {1: 1e-7, 2: 1e-6, 3: 1e-6}     # times (1 + |L|)


def validate():
    if set(TOLERANCES) != {1, 2, 3}:
        raise ValueError("TOLERANCES must cover d = 1, 2, 3")


def _case(d):
    def case(_index, seed):
        if d == 1:
            problem = random_problem_1d(seed)
        else:
            problem = random_problem_nd(seed, d)
        theta = random_theta(problem, seed)
        exact = risk(problem, theta)
        oracle = risk(problem.with_evaluator("quadrature"), theta)
        return abs(exact - oracle) / (1.0 + abs(oracle))
    return case


def run(ctx):
    diag = ctx.config.diagnostics
    n1 = diag.crosscheck_instances
    plan = {1: n1, 2: max(1, n1 // 2), 3: max(1, n1 // 2)}

    rows, failures, summary = [], {}, {}
    for d, count in plan.items():
        seeds = [diag.seed + k for k in range(count)]
        outcomes = BatchRunner(f"crosscheck d={d}", ctx.threads, ctx.emit, ctx.quiet).run(_case(d), seeds)
        gaps = [o.value for o in outcomes if o.ok]
        bad = [seeds[o.index] for o in outcomes if not o.ok or o.value > TOLERANCES[d]]
        worst = max(gaps) if gaps else float("nan")
        summary[str(d)] = {"instances": count, "max_relative_gap": worst, "tolerance": TOLERANCES[d]}
        rows.append([d, count, worst, TOLERANCES[d], len(bad)])
        if bad:
            failures[str(d)] = bad

    headers = ["d", "instances", "max gap / (1+|L|)", "tolerance", "failed"]
    log_table("evaluator agreement", headers, rows)
    ctx.show(rich_table("evaluator agreement", headers, rows))
    ctx.result.update(by_dimension=summary)

    if failures:
        ctx.result["failures"] = failures
        return (f"crosscheck: disagreement on {sum(len(v) for v in failures.values())} instance(s)", True)
    return ("crosscheck: all evaluators agree", False)
