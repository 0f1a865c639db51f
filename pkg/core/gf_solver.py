# reluflow
# See LICENSE for details.

# ===================== core/gf_solver.py =====================
# Gradient-flow integration with degeneration events, freezing and restart

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, FrozenSet, List, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import RK45

from core.exact_risk import Problem, gradient, risk_and_gradient
from core.network_model import ParamVector, degenerate_set, neuron_energy

log = logging.getLogger(__name__)

STATUSES = ("t_max", "converged", "max_steps")
EVENT_SAMPLES = 16
EVENT_TIME_TOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    t_max: float = 10.0
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    eps_deg: float = 1e-12
    g_tol: float = 1e-10
    max_steps: int = 100_000

    def __post_init__(self):
        for name in ("t_max", "rel_tol", "abs_tol", "eps_deg", "g_tol"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0):
                raise ValueError(f"solver.{name} must be > 0, got {value!r}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValueError(f"solver.max_steps must be a positive integer, got {self.max_steps!r}")

    def halved(self) -> "SolverConfig":
        return replace(self, rel_tol=self.rel_tol / 2, abs_tol=self.abs_tol / 2)


@dataclass(frozen=True)
class Sample:
    t: float
    theta: np.ndarray
    loss: float
    gnorm: float
    D: FrozenSet[int]


@dataclass(frozen=True)
class Event:
    t: float
    neuron: int
    reason: str = "energy"


@dataclass(frozen=True)
class StepRecord:
    t0: float
    t1: float
    interp: Callable[[float], np.ndarray]
    D: FrozenSet[int]


@dataclass
class Trajectory:
    problem: Problem
    samples: List[Sample] = field(default_factory=list)
    events: List[Event] = field(default_factory=list)
    steps: List[StepRecord] = field(default_factory=list)
    status: str = "t_max"

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.samples])

    @property
    def losses(self) -> np.ndarray:
        return np.array([s.loss for s in self.samples])

    @property
    def gnorms(self) -> np.ndarray:
        return np.array([s.gnorm for s in self.samples])

    @property
    def t_end(self) -> float:
        return self.samples[-1].t

    @property
    def final(self) -> ParamVector:
        return ParamVector(self.samples[-1].theta, self.problem.shape)

    def state_at(self, t: float) -> ParamVector:
        """Dense-output state at time t (sample times reuse the stored state)."""
        if not self.samples or t < self.samples[0].t or t > self.t_end:
            raise ValueError(f"t={t} outside the trajectory span")
        times = self.times
        k = int(np.searchsorted(times, t))
        if k < len(times) and times[k] == t:
            return ParamVector(self.samples[k].theta, self.problem.shape)
        starts = np.array([s.t0 for s in self.steps])
        j = max(int(np.searchsorted(starts, t, side="right")) - 1, 0)
        return ParamVector(self.steps[j].interp(t), self.problem.shape)


class SolverError(RuntimeError):
    def __init__(self, reason: str, trajectory: Trajectory, last_state: np.ndarray, time: float):
        super().__init__(f"{reason} at t={time:.6g}")
        self.reason = reason
        self.trajectory = trajectory
        self.last_state = last_state
        self.time = time


# ---------- field ----------

def _zero_rows(g: np.ndarray, theta: ParamVector, D) -> np.ndarray:
    s = theta.shape
    for i in D:
        g[i * s.d:(i + 1) * s.d] = 0.0
        g[s.off_b + i] = 0.0
    return g


def frozen_field(problem: Problem, theta: ParamVector, D) -> np.ndarray:
    """Generalized gradient with the w/b rows of every neuron in D overwritten by exact 0.0."""
    return _zero_rows(gradient(problem, theta), theta, D)


# ---------- event localisation ----------

def _energies(y: np.ndarray, problem: Problem, idx: List[int]) -> np.ndarray:
    th = ParamVector(y, problem.shape)
    return np.array([neuron_energy(th, i) for i in idx])


def _bisect(pred: Callable[[float], bool], lo: float, hi: float) -> float:
    """Smallest t in (lo, hi] (to EVENT_TIME_TOL) with pred(t) true; pred(hi) is assumed true."""
    while hi - lo > EVENT_TIME_TOL:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _first_event(problem: Problem, dense, t0: float, t1: float, y0: np.ndarray, y1: np.ndarray,
                 D: FrozenSet[int], eps: float) -> Optional[Tuple[float, List[int], str]]:
    s = problem.shape
    live = [i for i in range(s.H) if i not in D]
    if not live:
        return None
    best: Optional[Tuple[float, List[int], str]] = None

    # e_i <= eps somewhere in the step
    ts = np.linspace(t0, t1, EVENT_SAMPLES + 1)[1:]
    prev = t0
    for t in ts:
        y = y1 if t == t1 else dense(t)
        if np.min(_energies(y, problem, live)) <= eps:
            t_hit = _bisect(lambda u: np.min(_energies(dense(u), problem, live)) <= eps, prev, t)
            e = _energies(y1 if t_hit == t1 else dense(t_hit), problem, live)
            best = (t_hit, [i for i, ei in zip(live, e) if ei <= eps], "energy")
            break
        prev = t

    # one coordinate of (w_i, b_i) changes sign while the others are already below eps
    for i in live:
        comps = list(range(i * s.d, (i + 1) * s.d)) + [s.off_b + i]
        for c in comps:
            if not (y0[c] != 0.0 and np.sign(y0[c]) != np.sign(y1[c])):
                continue
            sign0 = np.sign(y0[c])
            t_c = _bisect(lambda u: np.sign(dense(u)[c]) != sign0, t0, t1)
            y_c = y1 if t_c == t1 else dense(t_c)
            others = [k for k in comps if k != c]
            if all(abs(y_c[k]) <= eps for k in others) and (best is None or t_c < best[0]):
                best = (t_c, [i], "crossing")
    return best


# ---------- solver ----------

def _sample(problem: Problem, t: float, y: np.ndarray, D: FrozenSet[int]) -> Sample:
    th = ParamVector(y, problem.shape)
    loss, g = risk_and_gradient(problem, th)
    g = _zero_rows(g, th, D)
    return Sample(float(t), th.theta, float(loss), float(np.linalg.norm(g)), frozenset(D))


def solve(problem: Problem, theta0: ParamVector, cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """
    Integrate theta' = -G(theta) with Dormand-Prince 5(4) and dense output.

    When some live neuron's energy |b_i| + sum_j |w_ij| drops to eps_deg
    (or one of its coordinates crosses zero with the rest already below
    eps_deg) the step is redone up to the hitting time, (w_i, b_i) is set
    to exact zeros, the neuron joins the frozen set and integration restarts.
    """
    traj = Trajectory(problem)
    y = np.array(theta0.theta, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise SolverError("non-finite initial state", traj, y, 0.0)
    D = set(degenerate_set(theta0))
    th = ParamVector(y, problem.shape)
    for i in range(problem.shape.H):
        if i not in D and neuron_energy(th, i) <= cfg.eps_deg:
            log.warning("neuron %d starts within eps_deg of the degenerate set; freezing at t=0", i)
            th = th.freeze(i)
            D.add(i)
            traj.events.append(Event(0.0, i, "initial"))
    y = th.theta.copy()
    t = 0.0
    traj.samples.append(_sample(problem, t, y, frozenset(D)))
    if traj.samples[-1].gnorm <= cfg.g_tol:
        traj.status = "converged"
        return traj

    n_steps = 0

    def make(t_start, y_start, t_bound, frozen):
        def rhs(_t, yy):
            return -frozen_field(problem, ParamVector(yy, problem.shape), frozen)
        return RK45(rhs, t_start, y_start, t_bound, rtol=cfg.rel_tol, atol=cfg.abs_tol)

    def record(solver, t_old, frozen) -> bool:
        """Store the accepted step; True when the run should stop."""
        nonlocal n_steps
        n_steps += 1
        traj.steps.append(StepRecord(t_old, float(solver.t), solver.dense_output(), frozen))
        traj.samples.append(_sample(problem, solver.t, solver.y.copy(), frozen))
        if traj.samples[-1].gnorm <= cfg.g_tol:
            traj.status = "converged"
            return True
        if n_steps >= cfg.max_steps:
            traj.status = "max_steps"
            return True
        return False

    def advance(solver):
        solver.step()
        if solver.status == "failed":
            raise SolverError("step-size underflow", traj, np.array(solver.y), float(solver.t))
        if not np.all(np.isfinite(solver.y)):
            raise SolverError("non-finite state", traj, np.array(solver.y), float(solver.t))

    while t < cfg.t_max:
        frozen = frozenset(D)
        solver = make(t, y, cfg.t_max, frozen)
        hit = None
        while solver.status == "running":
            t_old, y_old = float(solver.t), solver.y.copy()
            advance(solver)
            hit = _first_event(problem, solver.dense_output(), t_old, float(solver.t), y_old,
                               solver.y, frozen, cfg.eps_deg)
            if hit is not None:
                break
            if record(solver, t_old, frozen):
                return traj
        if hit is None:
            traj.status = "t_max"
            break

        t_star, idx, reason = hit
        if t_star > t_old:
            sub = make(t_old, y_old, t_star, frozen)
            while sub.status == "running":
                t_sub = float(sub.t)
                advance(sub)
                if record(sub, t_sub, frozen):
                    return traj
            y = sub.y.copy()
        else:
            y = y_old
        th = ParamVector(y, problem.shape)
        for i in idx:
            th = th.freeze(i)
            D.add(i)
            traj.events.append(Event(float(t_star), i, reason))
            log.debug("neuron %d degenerated at t=%.12g (%s)", i, t_star, reason)
        y = th.theta.copy()
        t = float(t_star)
        if traj.samples[-1].t == t:
            traj.samples.pop()
        traj.samples.append(_sample(problem, t, y, frozenset(D)))
        if traj.samples[-1].gnorm <= cfg.g_tol:
            traj.status = "converged"
            return traj

    log.info("flow finished: status=%s t=%.6g steps=%d events=%d", traj.status, traj.t_end,
             n_steps, len(traj.events))
    return traj


def energy_residual(problem: Problem, traj: Trajectory, order: int = 8) -> float:
    """|L(start) - L(end) - ∫ |G|^2 dt|, the integral by Gauss-Legendre on each step's dense output."""
    if not traj.samples:
        raise ValueError("empty trajectory")
    nodes, weights = leggauss(order)
    dissipated = 0.0
    for step in traj.steps:
        half = 0.5 * (step.t1 - step.t0)
        mid = 0.5 * (step.t1 + step.t0)
        acc = 0.0
        for x, w in zip(nodes, weights):
            th = ParamVector(step.interp(mid + half * x), problem.shape)
            g = frozen_field(problem, th, step.D)
            acc += w * float(g @ g)
        dissipated += half * acc
    return abs(traj.samples[0].loss - traj.samples[-1].loss - dissipated)
