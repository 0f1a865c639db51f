# reluflow
# See LICENSE for details.

# ===================== core/config_loader.py =====================
# Experiment configuration: parse, validate, fill defaults, dump back

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, List, Optional

import numpy as np
import yaml

from core.exact_risk import EVALUATORS, Problem
from core.gf_solver import SolverConfig
from core.network_model import NetworkShape, ParamVector
from core.piecewise_poly import (PiecewisePoly, audit_density,
                                 format_rational, parse_rational, pp_from_literal,
                                 pp_to_literal)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column

    def to_json(self) -> dict:
        return {"error": str(self), "field": self.field, "line": self.line, "column": self.column}


@dataclass(frozen=True)
class ProblemConfig:
    d: int
    H: int
    a: Fraction
    b_dom: Fraction
    target: PiecewisePoly
    density: PiecewisePoly
    evaluator: str = "exact-1d"

    @property
    def shape(self) -> NetworkShape:
        return NetworkShape(self.d, self.H, self.a, self.b_dom)


@dataclass(frozen=True)
class InitConfig:
    theta: Optional[List[float]] = None
    seed: int = 0
    scale: float = 0.5


@dataclass(frozen=True)
class DiagnosticsConfig:
    probe_epsilon: float = 1e-2
    probe_n: int = 200
    probe_coords: Optional[List[int]] = None
    fit_window_fraction: float = 0.1
    witness_n: int = 64
    gradcheck_instances: int = 100
    gradcheck_h: float = 1e-5
    crosscheck_instances: int = 50
    smoothing_gamma: float = 0.99
    smoothing_rs: List[float] = field(default_factory=lambda: [10.0, 100.0, 1000.0, 10000.0])
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    init: InitConfig = InitConfig()
    solver: SolverConfig = SolverConfig()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()

    def build_problem(self) -> Problem:
        p = self.problem
        return Problem(p.shape, p.target, p.density, p.evaluator)

    def initial_theta(self) -> ParamVector:
        shape = self.problem.shape
        if self.init.theta is not None:
            return ParamVector(np.array(self.init.theta, dtype=np.float64), shape)
        rng = np.random.default_rng(self.init.seed)
        return ParamVector(self.init.scale * rng.standard_normal(shape.n_params), shape)

    def with_overrides(self, seed: Optional[int] = None, t_max: Optional[float] = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, init=replace(cfg.init, seed=int(seed)),
                          diagnostics=replace(cfg.diagnostics, seed=int(seed)))
        if t_max is not None:
            if not t_max > 0:
                raise ConfigError(f"--t-max must be > 0, got {t_max}", field="solver.t_max")
            cfg = replace(cfg, solver=replace(cfg.solver, t_max=float(t_max)))
        return cfg

    @property
    def run_seed(self) -> int:
        return self.init.seed


# ---------- parsing ----------

def _read(path: Path) -> Any:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            return yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = mark.line + 1 if mark else None
            col = mark.column + 1 if mark else None
            raise ConfigError(f"{path}:{line}:{col}: {getattr(e, 'problem', e)}", line=line, column=col) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}", line=e.lineno, column=e.colno) from e


def _section(raw: dict, name: str, allowed: set) -> dict:
    sec = raw.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name} must be an object", field=name)
    unknown = set(sec) - allowed
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {name}.{key}", field=f"{name}.{key}")
    return sec


def _int(value: Any, fld: str, minimum: int = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{fld} must be an integer, got {value!r}", field=fld)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{fld} must be >= {minimum}, got {value}", field=fld)
    return value


def _pos(value: Any, fld: str) -> float:
    try:
        x = float(parse_rational(value))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{fld} must be a number, got {value!r}", field=fld)
    if not x > 0:
        raise ConfigError(f"{fld} must be > 0, got {value!r}", field=fld)
    return x


def _rational(value: Any, fld: str) -> Fraction:
    try:
        return parse_rational(value)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{fld} is not a rational number: {value!r}", field=fld)


def _pp(raw: Any, fld: str, d: int) -> PiecewisePoly:
    if not isinstance(raw, dict):
        raise ConfigError(f"{fld} must be a piecewise-polynomial object", field=fld)
    try:
        g = pp_from_literal(raw)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{fld}: malformed literal ({e})", field=fld)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"{fld}: {e}", field=fld)
    if g.dim != d:
        raise ConfigError(f"{fld}.dim is {g.dim} but problem.d is {d}", field=f"{fld}.dim")
    return g


def parse_config(raw: Any) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    unknown = set(raw) - {"problem", "init", "solver", "diagnostics"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown top-level key {key}", field=key)
    if "problem" not in raw:
        raise ConfigError("missing problem section", field="problem")

    p = _section(raw, "problem", {"d", "H", "domain", "target", "density", "evaluator"})
    for key in ("d", "H", "target", "density"):
        if key not in p:
            raise ConfigError(f"missing problem.{key}", field=f"problem.{key}")
    d = _int(p["d"], "problem.d", 1)
    H = _int(p["H"], "problem.H", 1)
    domain = p.get("domain", ["0", "1"])
    if not isinstance(domain, list) or len(domain) != 2:
        raise ConfigError("problem.domain must be [a, b_dom]", field="problem.domain")
    a, b_dom = _rational(domain[0], "problem.domain[0]"), _rational(domain[1], "problem.domain[1]")
    if not a < b_dom:
        raise ConfigError(f"problem.domain needs a < b_dom, got [{a}, {b_dom}]", field="problem.domain")
    evaluator = p.get("evaluator", "exact-1d" if d == 1 else "elimination")
    if evaluator not in EVALUATORS:
        raise ConfigError(f"problem.evaluator must be one of {', '.join(EVALUATORS)}", field="problem.evaluator")
    if evaluator == "exact-1d" and d != 1:
        raise ConfigError("exact-1d evaluator needs d = 1", field="problem.evaluator")
    if evaluator == "elimination" and d > 3:
        raise ConfigError("elimination evaluator handles d <= 3", field="problem.evaluator")
    target = _pp(p["target"], "problem.target", d)
    density = _pp(p["density"], "problem.density", d)
    problem = ProblemConfig(d, H, a, b_dom, target, density, evaluator)

    i = _section(raw, "init", {"theta", "seed", "scale"})
    n_params = problem.shape.n_params
    theta = i.get("theta")
    if theta is not None:
        if not isinstance(theta, list) or len(theta) != n_params:
            raise ConfigError(f"init.theta must list {n_params} numbers for d={d}, H={H}", field="init.theta")
        theta = [float(_rational(t, f"init.theta[{k}]")) for k, t in enumerate(theta)]
    init = InitConfig(theta, _int(i.get("seed", 0), "init.seed", 0), _pos(i.get("scale", 0.5), "init.scale"))

    s = _section(raw, "solver", {"t_max", "rel_tol", "abs_tol", "eps_deg", "g_tol", "max_steps"})
    base = SolverConfig()
    solver = SolverConfig(
        t_max=_pos(s.get("t_max", base.t_max), "solver.t_max"),
        rel_tol=_pos(s.get("rel_tol", base.rel_tol), "solver.rel_tol"),
        abs_tol=_pos(s.get("abs_tol", base.abs_tol), "solver.abs_tol"),
        eps_deg=_pos(s.get("eps_deg", base.eps_deg), "solver.eps_deg"),
        g_tol=_pos(s.get("g_tol", base.g_tol), "solver.g_tol"),
        max_steps=_int(s.get("max_steps", base.max_steps), "solver.max_steps", 1),
    )

    dd = DiagnosticsConfig()
    g = _section(raw, "diagnostics", set(asdict(dd)))
    coords = g.get("probe_coords", dd.probe_coords)
    if coords is not None:
        if not isinstance(coords, list) or not coords:
            raise ConfigError("diagnostics.probe_coords must be a non-empty list or null", field="diagnostics.probe_coords")
        coords = [_int(c, "diagnostics.probe_coords", 0) for c in coords]
        if max(coords) >= n_params:
            raise ConfigError(f"diagnostics.probe_coords entries must be < {n_params}", field="diagnostics.probe_coords")
    rs = g.get("smoothing_rs", dd.smoothing_rs)
    if not isinstance(rs, list) or not rs:
        raise ConfigError("diagnostics.smoothing_rs must be a non-empty list", field="diagnostics.smoothing_rs")
    rs = [_pos(r, "diagnostics.smoothing_rs") for r in rs]
    if any(r < 1 for r in rs):
        raise ConfigError("diagnostics.smoothing_rs entries must be >= 1", field="diagnostics.smoothing_rs")
    gamma = _pos(g.get("smoothing_gamma", dd.smoothing_gamma), "diagnostics.smoothing_gamma")
    if gamma >= 1:
        raise ConfigError("diagnostics.smoothing_gamma must lie in (0, 1)", field="diagnostics.smoothing_gamma")
    frac = _pos(g.get("fit_window_fraction", dd.fit_window_fraction), "diagnostics.fit_window_fraction")
    if frac >= 1:
        raise ConfigError("diagnostics.fit_window_fraction must lie in (0, 1)", field="diagnostics.fit_window_fraction")
    diagnostics = DiagnosticsConfig(
        probe_epsilon=_pos(g.get("probe_epsilon", dd.probe_epsilon), "diagnostics.probe_epsilon"),
        probe_n=_int(g.get("probe_n", dd.probe_n), "diagnostics.probe_n", 100),
        probe_coords=coords,
        fit_window_fraction=frac,
        witness_n=_int(g.get("witness_n", dd.witness_n), "diagnostics.witness_n", 2),
        gradcheck_instances=_int(g.get("gradcheck_instances", dd.gradcheck_instances), "diagnostics.gradcheck_instances", 1),
        gradcheck_h=_pos(g.get("gradcheck_h", dd.gradcheck_h), "diagnostics.gradcheck_h"),
        crosscheck_instances=_int(g.get("crosscheck_instances", dd.crosscheck_instances), "diagnostics.crosscheck_instances", 1),
        smoothing_gamma=gamma,
        smoothing_rs=rs,
        seed=_int(g.get("seed", dd.seed), "diagnostics.seed", 0),
    )
    return ExperimentConfig(problem, init, solver, diagnostics)


def load_config(path) -> ExperimentConfig:
    """Parse, validate and default-fill a config; the density is audited for nonnegativity."""
    path = Path(path)
    cfg = parse_config(_read(path))
    p = cfg.problem
    audit_density(p.density, p.a, p.b_dom)
    log.info("loaded config %s (d=%d, H=%d, evaluator=%s)", path, p.d, p.H, p.evaluator)
    return cfg


def dump_config(cfg: ExperimentConfig) -> dict:
    """Resolved config with every default written out; load(dump(c)) dumps to the same object."""
    p = cfg.problem
    return {
        "problem": {
            "d": p.d,
            "H": p.H,
            "domain": [format_rational(p.a), format_rational(p.b_dom)],
            "target": pp_to_literal(p.target),
            "density": pp_to_literal(p.density),
            "evaluator": p.evaluator,
        },
        "init": asdict(cfg.init),
        "solver": asdict(cfg.solver),
        "diagnostics": asdict(cfg.diagnostics),
    }
