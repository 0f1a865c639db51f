# reluflow
# See LICENSE for details.

# ===================== core/report_exporter.py =====================
# Export CSV/JSON artifacts and summary tables for a single run

import csv
import json as _json
import logging
from typing import Any, Dict, Iterable, List, Sequence

from rich.table import Table
from tabulate import tabulate

from core.file_conventions import SCHEMA_VERSION
from core.gf_solver import Event, Trajectory

log = logging.getLogger(__name__)


def export_json(obj: Dict[str, Any], out_path: str) -> None:
    """Stable JSON: sorted keys, indent 2, IEEE infinities written as Infinity."""
    with open(out_path, "w", encoding="utf-8") as f:
        _json.dump(obj, f, ensure_ascii=False, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")


def trajectory_header(n_params: int) -> List[str]:
    return ["t"] + [f"theta_{k}" for k in range(1, n_params + 1)] + ["loss", "gnorm", "ndeg"]


def export_trajectory_csv(traj: Trajectory, out_path: str) -> None:
    """t, theta_1..theta_D, loss, gnorm, ndeg per accepted sample; floats in repr form."""
    cols = trajectory_header(traj.problem.shape.n_params)
    with open(out_path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for s in traj.samples:
            w.writerow([repr(float(s.t))] + [repr(float(x)) for x in s.theta]
                       + [repr(float(s.loss)), repr(float(s.gnorm)), len(s.D)])


def events_payload(events: Iterable[Event]) -> Dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION,
            "events": [{"t": e.t, "neuron": e.neuron, "reason": e.reason} for e in events]}


def export_events(traj: Trajectory, out_path: str) -> None:
    payload = events_payload(traj.events)
    payload["status"] = traj.status
    payload["t_end"] = traj.t_end
    export_json(payload, out_path)


def export_result(subcommand: str, run_id: str, ok: bool, data: Dict[str, Any], out_path: str) -> None:
    export_json({"schema_version": SCHEMA_VERSION, "subcommand": subcommand, "run_id": run_id,
                 "ok": bool(ok), **data}, out_path)


def export_failure_report(subcommand: str, reason: str, details: Dict[str, Any], out_path: str) -> None:
    log.error("%s failed: %s", subcommand, reason)
    export_json({"schema_version": SCHEMA_VERSION, "subcommand": subcommand, "reason": reason,
                 "details": details}, out_path)


# ------------------------------------------------------------------
# Tables: plain text for the log file, rich for the console

def log_table(title: str, headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    text = tabulate(rows, headers=headers, floatfmt=".6g")
    log.info("%s\n%s", title, text)
    return text


def rich_table(title: str, headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> Table:
    table = Table(title=title)
    for h in headers:
        table.add_column(str(h))
    for row in rows:
        table.add_row(*[f"{x:.6g}" if isinstance(x, float) else str(x) for x in row])
    return table
