# reluflow
# See LICENSE for details.

# ===================== core/file_conventions.py =====================
# Helpers to compute standardized on-disk paths for run artifacts

import os

SCHEMA_VERSION = "1.0"

ARTIFACTS = {
    "resolved_config": "resolved_config.json",
    "result": "result.json",
    "trajectory": "trajectory.csv",
    "events": "events.json",
    "certificate": "certificate.json",
    "witness": "witness.json",
    "failure_report": "failure_report.json",
}


def ensure_dir(p: str):
    os.makedirs(p, exist_ok=True)
    return p


def run_id_for(seed: int) -> str:
    return f"seed{int(seed)}"


def run_dir(base_dir: str, subcommand: str, run_id: str) -> str:
    sub = subcommand.lower().replace(" ", "-")
    return ensure_dir(os.path.join(base_dir, sub, run_id))


def run_paths(base_dir: str, subcommand: str, run_id: str):
    rd = run_dir(base_dir, subcommand, run_id)
    paths = {"dir": rd}
    paths.update({key: os.path.join(rd, name) for key, name in ARTIFACTS.items()})
    return paths
