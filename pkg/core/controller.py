# reluflow
# See LICENSE for details.

# ===================== core/controller.py =====================
# run(subcommand, config, out_dir): load config, dispatch to the plugin, write artifacts

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

from rich.console import Console

from core.config_loader import ConfigError, ExperimentConfig, dump_config, load_config
from core.convergence_diag import LocallyConstantRiskError
from core.file_conventions import ARTIFACTS, ensure_dir, run_id_for, run_paths
from core.gf_solver import SolverError
from core.plugin_loader import discover_plugins
from core.quadrature import QuadratureError
from core.report_exporter import (export_events, export_failure_report, export_json, export_result,
                                  export_trajectory_csv)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


@dataclass
class RunContext:
    """Everything a plugin's run() gets: resolved config, artifact paths and the emit callback."""
    subcommand: str
    config: ExperimentConfig
    run_id: str
    paths: Dict[str, str]
    emit: Callable[[str], None]
    threads: Optional[int] = None
    quiet: bool = False
    console: Optional[Console] = None
    result: Dict[str, Any] = field(default_factory=dict)

    def show(self, renderable) -> None:
        if self.console is not None and not self.quiet:
            self.console.print(renderable)


def make_emit(console: Optional[Console], quiet: bool) -> Callable[[str], None]:
    def emit(msg: str) -> None:
        log.info(msg)
        if console is not None and not quiet:
            console.print(msg, highlight=False)
    return emit


def _failure_details(exc: BaseException, ctx: RunContext) -> Dict[str, Any]:
    details: Dict[str, Any] = {"exception": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, SolverError):
        details.update(reason=exc.reason, time=exc.time,
                       last_state=[float(x) for x in exc.last_state])
        if exc.trajectory.samples:
            # partial trajectory up to the failure
            export_trajectory_csv(exc.trajectory, ctx.paths["trajectory"])
            export_events(exc.trajectory, ctx.paths["events"])
    elif isinstance(exc, QuadratureError):
        details.update(worst_cell=list(exc.worst_cell))
    elif isinstance(exc, ConfigError):
        details.update(field=exc.field, line=exc.line, column=exc.column)
    elif isinstance(exc, LocallyConstantRiskError):
        details.update(reason="locally constant risk neighborhood")
    return details


def execute(subcommand: str, config_path: str, out_dir: str, seed: Optional[int] = None,
            t_max: Optional[float] = None, quiet: bool = False, threads: Optional[int] = None,
            console: Optional[Console] = None) -> int:
    """
    Run one subcommand end to end. The exit status is the verdict:
    0 iff every invariant the plugin asserts passed.
    """
    plugins = discover_plugins()
    module = plugins.get(subcommand)
    if module is None:
        log.error("unknown subcommand %r (available: %s)", subcommand, ", ".join(sorted(plugins)))
        return EXIT_USAGE

    emit = make_emit(console, quiet)
    try:
        cfg = load_config(config_path).with_overrides(seed=seed, t_max=t_max)
    except ConfigError as e:
        bad = ensure_dir(os.path.join(out_dir, subcommand, "invalid-config"))
        details = {"exception": "ConfigError", "message": str(e), "field": e.field,
                   "line": e.line, "column": e.column, "config": str(config_path)}
        export_failure_report(subcommand, "invalid configuration", details,
                              os.path.join(bad, ARTIFACTS["failure_report"]))
        emit(f"[!] invalid config: {e}")
        return EXIT_USAGE

    run_id = run_id_for(cfg.run_seed)
    paths = run_paths(out_dir, subcommand, run_id)
    stale = paths["failure_report"]
    if os.path.exists(stale):
        os.remove(stale)
    export_json(dump_config(cfg), paths["resolved_config"])

    ctx = RunContext(subcommand, cfg, run_id, paths, emit, threads, quiet, console)
    emit(f"[>>>] {subcommand} ({run_id}) -> {paths['dir']}")
    try:
        message, had_error = module.run(ctx)
    except Exception as e:
        log.exception("%s crashed", subcommand)
        export_failure_report(subcommand, f"{type(e).__name__}: {e}", _failure_details(e, ctx),
                              paths["failure_report"])
        emit(f"[x] {subcommand} failed: {e}")
        return EXIT_FAILED

    export_result(subcommand, run_id, not had_error, ctx.result, paths["result"])
    if had_error:
        export_failure_report(subcommand, message, ctx.result.get("failures", {}), paths["failure_report"])
        emit(f"[x] {message}")
        return EXIT_FAILED
    emit(f"[✓] {message}")
    return EXIT_OK
