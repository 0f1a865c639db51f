# reluflow
# See LICENSE for details.

# ===================== core/convergence_diag.py =====================
# Limit detection, rate certificates, tail length and the Lojasiewicz probe

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from core.batch_runner import worker_count
from core.exact_risk import Problem, risk, risk_and_gradient
from core.gf_solver import Trajectory, frozen_field
from core.network_model import ParamVector

log = logging.getLogger(__name__)

DIST_FLOOR = 1e-13
GAP_FLOOR = 1e-15
NONCRITICAL_SLOPE = 0.05
STALL_FRACTION = 0.05


class LocallyConstantRiskError(RuntimeError):
    """Every probe sample had the same risk as the limit."""


@dataclass(frozen=True)
class LimitCheck:
    limit: ParamVector
    converged: bool
    gnorm: float
    diameter: float
    reason: str = ""
    criterion: str = ""
    stall: float = math.nan


@dataclass
class RateCertificate:
    limit: ParamVector
    gnorm_at_limit: float
    loss_at_limit: float
    C_loss: float
    beta_hat: float
    C_param: float
    window: Tuple[float, float]
    n_fit: int
    passes: bool
    seed: Optional[int] = None
    alpha_hat: Optional[float] = None
    c_hat: Optional[float] = None

    @property
    def degenerate(self) -> bool:
        return math.isinf(self.beta_hat)

    def to_json(self) -> dict:
        return {
            "limit": [float(t) for t in self.limit.theta],
            "gnorm": self.gnorm_at_limit,
            "C_loss": self.C_loss,
            "beta_hat": self.beta_hat,
            "C_param": self.C_param,
            "alpha_hat": self.alpha_hat,
            "c_hat": self.c_hat,
            "seed": self.seed,
            "window": list(self.window),
            "passes": self.passes,
        }


@dataclass
class LojaEstimate:
    alpha_hat: float
    c_hat: float
    epsilon: float
    n_samples: int
    n_discarded: int
    worst_pair: dict
    regime: str
    seed: int
    coords: Optional[Tuple[int, ...]] = None
    slope: float = math.nan
    clamped: bool = False
    gaps: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    gnorms: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def violation(self) -> bool:
        return math.isinf(self.c_hat)

    def holds_on_samples(self) -> bool:
        return bool(np.all(self.gaps ** self.alpha_hat <= self.c_hat * self.gnorms))

    def to_json(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "slope": self.slope,
            "clamped": self.clamped,
            "c_hat": self.c_hat,
            "epsilon": self.epsilon,
            "n_samples": self.n_samples,
            "n_discarded": self.n_discarded,
            "regime": self.regime,
            "seed": self.seed,
            "coords": list(self.coords) if self.coords is not None else None,
            "worst_pair": self.worst_pair,
        }


# ---------- limit ----------

def _step_length(problem: Problem, step, lo: float, hi: float, order: int) -> float:
    """Gauss-Legendre ∫_lo^hi |G(theta_s)| ds over one step's dense output, D frozen."""
    if not hi > lo:
        return 0.0
    nodes, weights = leggauss(order)
    half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
    acc = 0.0
    for x, w in zip(nodes, weights):
        th = ParamVector(step.interp(mid + half * x), problem.shape)
        acc += w * float(np.linalg.norm(frozen_field(problem, th, step.D)))
    return max(half * acc, 0.0)


def path_length(problem: Problem, traj: Trajectory, t_from: float = 0.0, order: int = 8) -> float:
    """Curve length ∫_{t_from}^{T} |G(theta_s)| ds of the computed trajectory."""
    return sum(_step_length(problem, s, max(s.t0, t_from), s.t1, order) for s in traj.steps)


def detect_limit(problem: Problem, traj: Trajectory, g_tol: float = 1e-10,
                 diam_tol: float = 1e-4, stall_fraction: float = STALL_FRACTION) -> LimitCheck:
    """
    Accept the final state as the limit by either of two criteria:

    gradient: |G| <= 10 g_tol there and the trajectory stays within
        diam_tol (1 + |theta_end|) of it over the second half.
    stall: the last tenth of the time span covers at most stall_fraction
        of the whole curve length and |G| at the end is below its
        mid-run value. Flows whose speed decays like (1 + t)^-1 or
        faster spend about 3% of their length there; a steady drift
        spends 10%.
    """
    final = traj.final
    gnorm = traj.samples[-1].gnorm
    if len(traj.samples) < 10 and traj.status != "converged":
        return LimitCheck(final, False, gnorm, float("nan"), f"only {len(traj.samples)} samples")
    times = traj.times
    tail = traj.thetas[times >= 0.5 * traj.t_end]
    diameter = float(np.max(np.linalg.norm(tail - final.theta, axis=1))) if len(tail) else 0.0
    bound = diam_tol * (1.0 + float(np.linalg.norm(final.theta)))
    if gnorm <= 10.0 * g_tol:
        if diameter > bound:
            return LimitCheck(final, False, gnorm, diameter, f"late diameter {diameter:.3g} above {bound:.3g}")
        return LimitCheck(final, True, gnorm, diameter, "converged", criterion="gradient")

    total = path_length(problem, traj)
    late = path_length(problem, traj, 0.9 * traj.t_end)
    stall = late / total if total > 0 else 0.0
    mid_gnorm = traj.samples[int(np.searchsorted(times, 0.5 * traj.t_end))].gnorm
    if stall <= stall_fraction and gnorm < mid_gnorm:
        log.info("limit accepted on stall: last tenth covers %.3g of length %.4g, |G| %.3g -> %.3g",
                 stall, total, mid_gnorm, gnorm)
        return LimitCheck(final, True, gnorm, diameter, "stalled", criterion="stall", stall=stall)
    return LimitCheck(final, False, gnorm, diameter,
                      f"gradient norm {gnorm:.3g} above {10 * g_tol:.3g} and last tenth covers "
                      f"{stall:.3g} of the curve length", stall=stall)


# ---------- rate certificate ----------

def fit_rates(problem: Problem, traj: Trajectory, limit: ParamVector,
              window_fraction: float = 0.1, floor: float = DIST_FLOOR,
              seed: Optional[int] = None) -> RateCertificate:
    times = traj.times
    L_lim = risk(problem, limit)
    g_lim = float(np.linalg.norm(frozen_field(problem, limit, traj.samples[-1].D)))
    gaps = np.abs(traj.losses - L_lim)
    C_loss = float(np.max(gaps * (1.0 + times)))
    dist = np.linalg.norm(traj.thetas - limit.theta, axis=1)

    t_end = traj.t_end
    window = (window_fraction * t_end, t_end)
    sel = (times >= window[0]) & (times <= window[1]) & (dist > floor)
    n_fit = int(np.count_nonzero(sel))
    if n_fit < 2:
        log.info("rate fit window holds %d usable samples; degenerate certificate", n_fit)
        return RateCertificate(limit, g_lim, L_lim, C_loss, math.inf, 0.0, window, n_fit,
                               math.isfinite(C_loss), seed)
    slope, _ = np.polyfit(np.log1p(times[sel]), np.log(dist[sel]), 1)
    beta = float(-slope)
    with np.errstate(over="ignore"):
        C_param = float(np.max(dist * (1.0 + times) ** beta))
    passes = math.isfinite(C_loss) and math.isfinite(C_param) and beta > 0
    log.info("rate fit: beta=%.4g C_param=%.4g C_loss=%.4g over %d samples in [%.4g, %.4g]",
             beta, C_param, C_loss, n_fit, *window)
    return RateCertificate(limit, g_lim, L_lim, C_loss, beta, C_param, window, n_fit, passes, seed)


@dataclass(frozen=True)
class CertificateCheck:
    loss_inflation: float
    param_inflation: float
    n_points: int

    def ok(self, slack: float = 0.05) -> bool:
        return self.loss_inflation <= 1.0 + slack and self.param_inflation <= 1.0 + slack


def _inflation(dense_max: float, stored: float) -> float:
    if stored > 0:
        return dense_max / stored
    return 1.0 if dense_max <= 0 else math.inf


def verify_certificate(problem: Problem, traj: Trajectory, cert: RateCertificate,
                       refine: int = 10) -> CertificateCheck:
    """Re-check both certificate bounds on a refine-times denser dense-output grid."""
    pts: List[Tuple[float, ParamVector]] = [(s.t, ParamVector(s.theta, problem.shape)) for s in traj.samples]
    for step in traj.steps:
        for k in range(1, refine):
            t = step.t0 + (step.t1 - step.t0) * k / refine
            pts.append((t, ParamVector(step.interp(t), problem.shape)))
    loss_max = 0.0
    param_max = 0.0
    for t, th in pts:
        loss_max = max(loss_max, abs(risk(problem, th) - cert.loss_at_limit) * (1.0 + t))
        if not cert.degenerate:
            param_max = max(param_max, float(np.linalg.norm(th.theta - cert.limit.theta)) * (1.0 + t) ** cert.beta_hat)
    param_infl = 1.0 if cert.degenerate else _inflation(param_max, cert.C_param)
    return CertificateCheck(_inflation(loss_max, cert.C_loss), param_infl, len(pts))


# ---------- tail length ----------

def tail_length(problem: Problem, traj: Trajectory, order: int = 8) -> np.ndarray:
    """sigma(t_k) = ∫_{t_k}^{T} |G(theta_s)| ds at every sample time, non-increasing by construction."""
    pieces = [_step_length(problem, s, s.t0, s.t1, order) for s in traj.steps]
    starts = np.array([s.t0 for s in traj.steps])
    suffix = np.concatenate([np.cumsum(np.array(pieces)[::-1])[::-1], [0.0]]) if pieces else np.zeros(1)
    idx = np.searchsorted(starts, traj.times, side="left")
    return suffix[idx]


# ---------- Lojasiewicz probe ----------

def _probe_point(problem: Problem, limit: ParamVector, epsilon: float, seed: int, index: int,
                 coords: Sequence[int]) -> Tuple[np.ndarray, float, float]:
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))
    k = len(coords)
    direction = rng.standard_normal(k)
    direction /= np.linalg.norm(direction)
    radius = epsilon * rng.random() ** (1.0 / k)
    arr = limit.theta.copy()
    arr[list(coords)] += radius * direction
    th = limit.with_theta(arr)
    L, g = risk_and_gradient(problem, th)
    return arr, L, float(np.linalg.norm(g))


def loja_probe(problem: Problem, limit: ParamVector, epsilon: float, n: int, seed: int,
               coords: Optional[Sequence[int]] = None, threads: Optional[int] = None) -> LojaEstimate:
    """
    Sample the ball B_epsilon(limit) (or its slice along `coords`) and fit
    |L - L*|^alpha <= c |G|. alpha is the regression slope of log|G| on
    log|L - L*|, kept in `slope`. A slope below NONCRITICAL_SLOPE means |G| is
    bounded below: the point is reported non-critical with alpha = 1. Slopes
    above 1 are clamped to 1. Either adjustment sets `clamped` and logs a warning.
    """
    if not epsilon > 0:
        raise ValueError(f"probe epsilon must be > 0, got {epsilon}")
    if n < 100:
        raise ValueError(f"probe needs n >= 100 samples, got {n}")
    if seed < 0:
        raise ValueError(f"probe seed must be >= 0, got {seed}")
    coords = tuple(range(limit.shape.n_params)) if coords is None else tuple(int(c) for c in coords)
    if not coords or any(not 0 <= c < limit.shape.n_params for c in coords):
        raise ValueError(f"probe coordinates {list(coords)} outside 0..{limit.shape.n_params - 1}")

    L_lim = risk(problem, limit)
    with ThreadPoolExecutor(max_workers=worker_count(threads)) as pool:
        results = list(pool.map(lambda k: _probe_point(problem, limit, epsilon, seed, k, coords), range(n)))

    thetas = [r[0] for r in results]
    gaps = np.array([abs(r[1] - L_lim) for r in results])
    gnorms = np.array([r[2] for r in results])
    keep = gaps > GAP_FLOOR
    if not np.any(keep):
        raise LocallyConstantRiskError("locally constant risk neighborhood: every probe sample was discarded")
    idx = np.nonzero(keep)[0]
    gaps_k, gn_k = gaps[keep], gnorms[keep]

    positive = gn_k > 0
    slope = 0.0
    if np.count_nonzero(positive) >= 2 and np.ptp(np.log(gaps_k[positive])) > 0:
        slope = float(np.polyfit(np.log(gaps_k[positive]), np.log(gn_k[positive]), 1)[0])
    clamped = not NONCRITICAL_SLOPE <= slope <= 1.0
    if slope < NONCRITICAL_SLOPE:
        regime, alpha = "noncritical", 1.0
    else:
        regime, alpha = "critical", min(slope, 1.0)
    if clamped:
        log.warning("fitted Lojasiewicz slope %.4g lies outside [%.2g, 1]; reporting alpha=%.4g (%s)",
                    slope, NONCRITICAL_SLOPE, alpha, regime)

    with np.errstate(divide="ignore"):
        ratios = np.where(gn_k > 0, gaps_k ** alpha / np.where(gn_k > 0, gn_k, 1.0), np.inf)
    w = int(np.argmax(ratios))
    c_hat = float(ratios[w])
    if math.isfinite(c_hat):
        while not np.all(gaps_k ** alpha <= c_hat * gn_k):
            c_hat = float(np.nextafter(c_hat, math.inf))
    else:
        log.warning("probe sample %d has zero generalized gradient with a nonzero risk gap", int(idx[w]))
    worst = {"index": int(idx[w]), "theta": [float(t) for t in thetas[idx[w]]],
             "gap": float(gaps_k[w]), "gnorm": float(gn_k[w])}
    log.info("Lojasiewicz probe: alpha=%.4g (slope %.4g) c=%.4g regime=%s kept=%d/%d",
             alpha, slope, c_hat, regime, len(idx), n)
    return LojaEstimate(alpha, c_hat, float(epsilon), int(len(idx)), int(n - len(idx)), worst, regime,
                        int(seed), None if len(coords) == limit.shape.n_params else coords,
                        slope, clamped, gaps_k, gn_k)


def predicted_rate(loja: LojaEstimate) -> float:
    """Parameter-convergence exponent min{1, (1 - alpha)/alpha} implied by the pair (alpha, c)."""
    a = loja.alpha_hat
    return min(1.0, (1.0 - a) / a)


def tail_bound(loja: LojaEstimate, gap: float) -> float:
    """c (1 - alpha)^-1 gap^(1 - alpha): bound on the remaining curve length from a risk gap."""
    a = loja.alpha_hat
    if a >= 1.0:
        return math.inf
    return loja.c_hat / (1.0 - a) * max(gap, 0.0) ** (1.0 - a)
