# reluflow
# See LICENSE for details.

# ===================== core/exact_risk.py =====================
# Risk, generalized gradient, smoothed surrogates and the subdifferential witness

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Callable, List, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad_vec
from scipy.special import expit

from core.network_model import (NetworkShape, ParamVector, ShapeError, degenerate_set,
                                kinks_1d)
from core.piecewise_poly import (Breakline1D, PiecewisePoly, Poly, canonicalize_1d,
                                 definite_integral, integrate_poly_1d)

log = logging.getLogger(__name__)

EVALUATORS = ("exact-1d", "elimination", "quadrature")

# Vectorised data callables map an (N, d) array of points to N values.
DataFn = Callable[[np.ndarray], np.ndarray]
Data = Union[PiecewisePoly, DataFn]


class EvaluatorError(ValueError):
    """Evaluator does not support this problem (dimension, data kind, mode)."""


@dataclass(frozen=True)
class Problem:
    shape: NetworkShape
    target: Data
    density: Data
    evaluator: str = "exact-1d"

    def __post_init__(self):
        if self.evaluator not in EVALUATORS:
            raise EvaluatorError(f"unknown evaluator {self.evaluator!r}; expected one of {', '.join(EVALUATORS)}")
        for name in ("target", "density"):
            data = getattr(self, name)
            if isinstance(data, PiecewisePoly):
                if data.dim != self.shape.d:
                    raise EvaluatorError(f"{name}.dim is {data.dim} but the network has d={self.shape.d}")
            elif not callable(data):
                raise EvaluatorError(f"{name} must be a piecewise polynomial or a callable")
            elif self.evaluator != "quadrature":
                raise EvaluatorError(f"callable {name} is only supported by the quadrature evaluator")
        if self.evaluator == "exact-1d" and self.shape.d != 1:
            raise EvaluatorError(f"exact-1d evaluator needs d=1, got d={self.shape.d}")
        if self.evaluator == "elimination" and self.shape.d > 3:
            raise EvaluatorError(f"elimination evaluator handles d <= 3, got d={self.shape.d}")

    def with_evaluator(self, evaluator: str) -> "Problem":
        return replace(self, evaluator=evaluator)

    @property
    def piecewise(self) -> bool:
        return isinstance(self.target, PiecewisePoly) and isinstance(self.density, PiecewisePoly)

    def target_values(self, X: np.ndarray) -> np.ndarray:
        return _data_values(self.target, X)

    def density_values(self, X: np.ndarray) -> np.ndarray:
        return _data_values(self.density, X)

    @cached_property
    def data_lines(self) -> Tuple[Breakline1D, Breakline1D]:
        """Canonical breaklines of (target, density); d = 1 piecewise data only."""
        s = self.shape
        return canonicalize_1d(self.target, s.a, s.b_dom), canonicalize_1d(self.density, s.a, s.b_dom)

    @cached_property
    def data_breakpoints(self) -> Tuple[Fraction, ...]:
        f_line, p_line = self.data_lines
        return tuple(sorted(set(f_line.breakpoints) | set(p_line.breakpoints)))


def _data_values(data: Data, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if isinstance(data, PiecewisePoly):
        return data.eval_many(X)
    return np.asarray(data(X), dtype=np.float64).reshape(X.shape[0])


def _check_theta(problem: Problem, theta: ParamVector):
    if theta.shape != problem.shape:
        raise ShapeError(f"theta has shape {theta.shape}, problem expects {problem.shape}")


# ---------- exact-1d cell sweep ----------

def _cell_integrals(level, slope, f_poly: Poly, p_poly: Poly, lo, hi, exact: bool, want_risk: bool):
    """∫ r^2 p, ∫ r p and ∫ x r p over [lo, hi] for the cell residual r = level + slope x - f."""
    if exact:
        res = Poly.from_coeffs_1d([level, slope]) - f_poly
        res_p = res * p_poly
        sq = integrate_poly_1d(res * res_p, lo, hi) if want_risk else None
        return sq, integrate_poly_1d(res_p, lo, hi), integrate_poly_1d(res_p * Poly.variable(1, 0), lo, hi)
    res = P.polysub([level, slope], f_poly.float_coeffs())
    res_p = P.polymul(res, p_poly.float_coeffs())
    sq = definite_integral(P.polymul(res, res_p), lo, hi) if want_risk else None
    return sq, definite_integral(res_p, lo, hi), definite_integral(P.polymulx(res_p), lo, hi)


def _sweep_1d(problem: Problem, theta: ParamVector, exact: bool, want_risk: bool, want_grad: bool):
    """
    One pass over the cells cut by data breakpoints and kinks.

    On every cell the residual N - f and the density are single polynomials,
    so each integral is an antiderivative difference.
    """
    s = problem.shape
    H = s.H
    f_line, p_line = problem.data_lines
    if exact:
        th = theta.as_fractions()
        conv = Fraction
        data_pts = list(problem.data_breakpoints)
    else:
        th = [float(t) for t in theta.theta]
        conv = float
        data_pts = [float(t) for t in problem.data_breakpoints]
    w = th[:H]
    b = th[s.off_b:s.off_b + H]
    v = th[s.off_v:s.off_v + H]
    c = th[s.off_c]

    points = sorted(set(data_pts) | set(kinks_1d(theta, exact=exact)))
    zero = conv(0)
    risk = zero
    grad = [zero] * s.n_params
    for lo, hi in zip(points[:-1], points[1:]):
        if not lo < hi:
            continue
        mid = (lo + hi) / 2
        fmid = Fraction(mid) if not exact else mid
        active = [i for i in range(H) if w[i] * mid + b[i] > 0]
        level = c + sum((v[i] * b[i] for i in active), zero)
        slope = sum((v[i] * w[i] for i in active), zero)
        sq, I0, I1 = _cell_integrals(level, slope, f_line.polys[f_line.cell_index(fmid)],
                                     p_line.polys[p_line.cell_index(fmid)], lo, hi, exact, want_risk)
        if want_risk:
            risk += sq
        if want_grad:
            for i in active:
                grad[i] += 2 * v[i] * I1
                grad[s.off_b + i] += 2 * v[i] * I0
                grad[s.off_v + i] += 2 * (b[i] * I0 + w[i] * I1)
            grad[s.off_c] += 2 * I0
    out_risk = max(float(risk), 0.0) if want_risk else None
    out_grad = np.array([float(g) for g in grad]) if want_grad else None
    return out_risk, out_grad


def _dispatch(problem: Problem, theta: ParamVector, exact: bool, want_risk: bool, want_grad: bool):
    _check_theta(problem, theta)
    ev = problem.evaluator
    if ev == "exact-1d":
        return _sweep_1d(problem, theta, exact, want_risk, want_grad)
    if exact:
        raise EvaluatorError(f"exact mode is only offered by exact-1d, not {ev}")
    if ev == "elimination":
        from core import semialg_engine
        r = semialg_engine.risk_by_elimination(problem, theta) if want_risk else None
        g = semialg_engine.gradient_by_elimination(problem, theta) if want_grad else None
        return r, g
    from core import quadrature
    r, g = quadrature.risk_and_gradient(problem, theta)
    return (r if want_risk else None), (g if want_grad else None)


def risk(problem: Problem, theta: ParamVector, exact: bool = False) -> float:
    return _dispatch(problem, theta, exact, True, False)[0]


def gradient(problem: Problem, theta: ParamVector, exact: bool = False) -> np.ndarray:
    """
    Generalized gradient: 2 v_i ∫_{I_i} x_j (N - f) p for w, 2 v_i ∫_{I_i} (N - f) p for b,
    2 ∫ max{z_i, 0} (N - f) p for v and 2 ∫ (N - f) p for c.
    Rows of degenerate neurons come out exactly 0.0.
    """
    return _dispatch(problem, theta, exact, False, True)[1]


def risk_and_gradient(problem: Problem, theta: ParamVector, exact: bool = False) -> Tuple[float, np.ndarray]:
    return _dispatch(problem, theta, exact, True, True)


# ---------- smoothed surrogates ----------

@dataclass(frozen=True)
class SmoothedFamily:
    """
    Shifted softplus R_r(x) = (1/r) ln(1 + exp(r (x - r^-gamma))).

    The shift makes R_r'(0) -> 0, matching the left-derivative convention
    of the generalized gradient at degenerate neurons.
    """
    gamma: float = 0.5

    def shift(self, r: float) -> float:
        return float(r) ** (-self.gamma)

    def value(self, x, r: float):
        return np.logaddexp(0.0, r * (np.asarray(x, dtype=np.float64) - self.shift(r))) / r

    def derivative(self, x, r: float):
        return expit(r * (np.asarray(x, dtype=np.float64) - self.shift(r)))


def _check_r(r: float):
    if not r >= 1:
        raise ValueError(f"smoothing parameter r must be >= 1, got {r}")


def _smoothed_integrand(problem: Problem, theta: ParamVector, r: float, family: SmoothedFamily,
                        with_risk: bool):
    s = problem.shape
    w, b, v, c = theta.w, theta.b, theta.v, theta.c

    def fn(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        z = X @ w.T + b
        act = family.value(z, r)
        dact = family.derivative(z, r)
        res = c + act @ v - problem.target_values(X)
        rp = res * problem.density_values(X)
        cols = []
        if with_risk:
            cols.append((res * rp)[:, None])
        gw = 2.0 * (dact * v)[:, :, None] * X[:, None, :] * rp[:, None, None]
        cols.append(gw.reshape(X.shape[0], s.H * s.d))
        cols.append(2.0 * dact * v * rp[:, None])
        cols.append(2.0 * act * rp[:, None])
        cols.append(2.0 * rp[:, None])
        return np.hstack(cols)

    return fn


def _smoothed_points_1d(problem: Problem, theta: ParamVector, r: float, family: SmoothedFamily) -> List[float]:
    a, bd = problem.shape.bounds()
    pts = set()
    if isinstance(problem.target, PiecewisePoly) and isinstance(problem.density, PiecewisePoly):
        pts.update(float(t) for t in problem.data_breakpoints)
    sh = family.shift(r)
    for i in range(problem.shape.H):
        wi, bi = float(theta.w[i, 0]), float(theta.b[i])
        if wi != 0.0:
            pts.add(-bi / wi)
            pts.add((sh - bi) / wi)
    return sorted(p for p in pts if a < p < bd)


def _smoothed_integral(problem: Problem, theta: ParamVector, r: float, family: SmoothedFamily,
                       with_risk: bool, tol: float) -> np.ndarray:
    from core import quadrature
    fn = _smoothed_integrand(problem, theta, r, family, with_risk)
    a, bd = problem.shape.bounds()
    if problem.shape.d == 1:
        res, err, info = quad_vec(lambda x: fn(np.array([[x]]))[0], a, bd, epsabs=tol, epsrel=0.0,
                                  points=_smoothed_points_1d(problem, theta, r, family) or None,
                                  limit=20000, full_output=True)
        if not info.success:
            errs = np.asarray(info.errors)
            worst = tuple(float(t) for t in info.intervals[int(np.argmax(errs))]) if len(errs) else (a, bd)
            raise quadrature.QuadratureError(
                f"smoothed integral did not reach tolerance {tol:g} (r={r:g}): {info.message}",
                worst_cell=worst, estimate=np.asarray(res))
        return np.asarray(res, dtype=np.float64)
    sh = family.shift(r)
    planes = quadrature.problem_planes(problem, theta)
    planes += [(theta.w[i].astype(float), float(theta.b[i]) - sh)
               for i in range(problem.shape.H) if np.any(theta.w[i] != 0.0)]
    return quadrature.integrate_vector(fn, problem.shape.d, planes, a, bd, order=12,
                                       adaptive=True, tol=max(tol, 1e-9))


def smoothed_risk(problem: Problem, theta: ParamVector, r: float,
                  family: SmoothedFamily = SmoothedFamily(), tol: float = 1e-10) -> float:
    _check_theta(problem, theta)
    _check_r(r)
    return float(_smoothed_integral(problem, theta, r, family, True, tol)[0])


def smoothed_gradient(problem: Problem, theta: ParamVector, r: float,
                      family: SmoothedFamily = SmoothedFamily(), tol: float = 1e-10) -> np.ndarray:
    """Gradient of the smoothed risk by adaptive quadrature; approximate by construction."""
    _check_theta(problem, theta)
    _check_r(r)
    return _smoothed_integral(problem, theta, r, family, False, tol)


# ---------- limiting-subdifferential witness ----------

@dataclass(frozen=True)
class WitnessResult:
    residuals: List[float]
    final: float
    degenerate: Tuple[int, ...]
    fd_errors: List[float] = field(default_factory=list)


def finite_difference_gradient(problem: Problem, theta: ParamVector, h: float = 1e-5) -> np.ndarray:
    out = np.zeros(theta.shape.n_params)
    base = theta.theta
    for k in range(base.size):
        up = base.copy()
        dn = base.copy()
        up[k] += h
        dn[k] -= h
        out[k] = (risk(problem, theta.with_theta(up)) - risk(problem, theta.with_theta(dn))) / (2 * h)
    return out


def relative_gradient_error(fd: np.ndarray, g: np.ndarray) -> float:
    """max_k |fd_k - g_k| / max(1, |g_k|)."""
    return float(np.max(np.abs(fd - g) / np.maximum(1.0, np.abs(g))))


def subdiff_witness(problem: Problem, theta: ParamVector, N: int,
                    check_fd: bool = False, h: float = 1e-5) -> WitnessResult:
    """
    Residuals |G(th_n) - G(theta)| along th_n = theta with b_i - 1/n on the
    degenerate set. th_n has no degenerate neuron, so the risk is
    differentiable there; with check_fd the finite-difference mismatch at
    every th_n is reported too.
    """
    if N < 2:
        raise ValueError(f"witness needs N >= 2, got {N}")
    _check_theta(problem, theta)
    dead = sorted(degenerate_set(theta))
    g0 = gradient(problem, theta)
    residuals, fd_errors = [], []
    for n in range(1, N + 1):
        arr = theta.theta.copy()
        for i in dead:
            arr[theta.shape.off_b + i] -= 1.0 / n
        th_n = theta.with_theta(arr)
        if degenerate_set(th_n):
            log.warning("witness point n=%d still has degenerate neurons %s", n, sorted(degenerate_set(th_n)))
        g_n = gradient(problem, th_n)
        residuals.append(float(np.linalg.norm(g_n - g0)))
        if check_fd:
            fd_errors.append(relative_gradient_error(finite_difference_gradient(problem, th_n, h), g_n))
    log.debug("witness over %d points, degenerate=%s, final residual %.3g", N, dead, residuals[-1])
    return WitnessResult(residuals, residuals[-1], tuple(dead), fd_errors)
