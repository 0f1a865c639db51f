# reluflow
# See LICENSE for details.

# ===================== core/quadrature.py =====================
# Cell-wise Gauss-Legendre oracle over the arrangement cut by neuron and data hyperplanes

from __future__ import annotations

import logging
from functools import lru_cache
from itertools import combinations
from typing import Callable, List, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from core.piecewise_poly import PiecewisePoly

log = logging.getLogger(__name__)

Plane = Tuple[np.ndarray, float]          # normal . x + offset = 0
VectorFn = Callable[[np.ndarray], np.ndarray]

DEFAULT_ORDER = 30
ADAPTIVE_ORDER = 8
ADAPTIVE_TOL = 1e-9
MAX_DEPTH = 14


class QuadratureError(RuntimeError):
    """Adaptive refinement gave up; `worst_cell` is the outer interval that failed."""

    def __init__(self, message: str, worst_cell: Tuple[float, float], estimate=None):
        super().__init__(message)
        self.worst_cell = worst_cell
        self.estimate = estimate


@lru_cache(maxsize=None)
def _gauss(n: int):
    t, w = leggauss(n)
    return t, w


def _nodes(lo: np.ndarray, hi: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss nodes/weights on each [lo_k, hi_k]; returns flat arrays (cell-major)."""
    t, w = _gauss(n)
    half = (hi - lo) / 2.0
    mid = (hi + lo) / 2.0
    x = mid[:, None] + half[:, None] * t[None, :]
    wt = half[:, None] * w[None, :]
    return x.reshape(-1), wt.reshape(-1)


# ---------- arrangement projection ----------

def _key(normal: np.ndarray, offset: float) -> tuple:
    scale = max(float(np.max(np.abs(normal))), 1e-300)
    n, o = normal / scale, offset / scale
    lead = n[np.nonzero(np.abs(n) > 1e-14)[0][0]]
    if lead < 0:
        n, o = -n, -o
    return tuple(np.round(n, 12)) + (round(o, 12),)


def _crosses_box(normal: np.ndarray, offset: float, a: float, b: float) -> bool:
    lo = offset + np.sum(np.minimum(normal * a, normal * b))
    hi = offset + np.sum(np.maximum(normal * a, normal * b))
    return lo < 0.0 < hi


def _clean(planes: Sequence[Plane], a: float, b: float) -> List[Plane]:
    out, seen = [], set()
    for normal, offset in planes:
        normal = np.asarray(normal, dtype=np.float64)
        if not np.all(np.isfinite(normal)) or not np.isfinite(offset):
            continue
        if float(np.max(np.abs(normal), initial=0.0)) <= 1e-14 * max(1.0, abs(offset)):
            continue
        if not _crosses_box(normal, offset, a, b):
            continue
        k = _key(normal, offset)
        if k in seen:
            continue
        seen.add(k)
        out.append((normal, float(offset)))
    return out


def _project(planes: List[Plane], k: int, a: float, b: float) -> List[Plane]:
    """Planes in x_0..x_k -> planes in x_0..x_{k-1} where the x_k-cell structure can change."""
    kept: List[Plane] = []
    roots: List[Plane] = []
    for normal, offset in planes:
        if normal[k] == 0.0:
            kept.append((normal[:k], offset))
        else:
            roots.append((-normal[:k] / normal[k], -offset / normal[k]))
    for R, r0 in roots:
        kept.append((R, r0 - a))
        kept.append((R, r0 - b))
    for (R1, r1), (R2, r2) in combinations(roots, 2):
        kept.append((R1 - R2, r1 - r2))
    return _clean(kept, a, b)


def build_levels(planes: Sequence[Plane], d: int, a: float, b: float) -> List[List[Plane]]:
    """levels[k]: planes in x_0..x_k with a nonzero x_k coefficient (breakpoints for x_k)."""
    levels: List[List[Plane]] = [[] for _ in range(d)]
    current = _clean(planes, a, b)
    for k in range(d - 1, -1, -1):
        levels[k] = [(n, o) for n, o in current if n[k] != 0.0]
        if k:
            current = _project(current, k, a, b)
    return levels


def outer_breakpoints(levels: List[List[Plane]], a: float, b: float) -> np.ndarray:
    pts = {a, b}
    for normal, offset in levels[0]:
        r = -offset / normal[0]
        if a < r < b:
            pts.add(float(r))
    return np.array(sorted(pts))


# ---------- integration ----------

def _expand(X: np.ndarray, W: np.ndarray, planes: List[Plane], k: int, a: float, b: float, n: int):
    """Add coordinate x_k: per row, split [a, b] at the plane roots and lay Gauss nodes in each piece."""
    R = X.shape[0]
    if planes:
        N = np.array([p[0] for p in planes])            # (m, k+1)
        O = np.array([p[1] for p in planes])
        with np.errstate(divide="ignore", invalid="ignore"):
            roots = -(O[None, :] + X @ N[:, :k].T) / N[:, k][None, :]
        roots = np.clip(np.nan_to_num(roots, nan=a), a, b)
    else:
        roots = np.empty((R, 0))
    edges = np.sort(np.hstack([np.full((R, 1), a), roots, np.full((R, 1), b)]), axis=1)
    lo, hi = edges[:, :-1], edges[:, 1:]
    mask = hi > lo
    rows = np.nonzero(mask)[0]
    xk, wk = _nodes(lo[mask], hi[mask], n)
    rep = np.repeat(rows, n)
    X2 = np.hstack([X[rep], xk[:, None]])
    return X2, W[rep] * wk


def _integrate_outer(fn: VectorFn, levels: List[List[Plane]], lo: np.ndarray, hi: np.ndarray,
                     a: float, b: float, n: int) -> np.ndarray:
    x0, w0 = _nodes(lo, hi, n)
    X, W = x0[:, None], w0
    for k in range(1, len(levels)):
        X, W = _expand(X, W, levels[k], k, a, b, n)
    vals = np.asarray(fn(X), dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, None]
    return W @ vals


def integrate_vector(fn: VectorFn, d: int, planes: Sequence[Plane], a: float, b: float,
                     order: int = DEFAULT_ORDER, adaptive: bool = False,
                     tol: float = ADAPTIVE_TOL, max_depth: int = MAX_DEPTH) -> np.ndarray:
    """
    ∫_{[a,b]^d} fn over the cylindrical cells of the plane arrangement.

    fn maps an (N, d) array to (N, k). Non-adaptive mode is a fixed Gauss rule
    per cell. Adaptive mode compares orders n and n+2 on each outer interval
    and bisects the ones that disagree by more than tol * max(1, |I|).
    """
    levels = build_levels(planes, d, a, b)
    bps = outer_breakpoints(levels, a, b)
    if not adaptive:
        return _integrate_outer(fn, levels, bps[:-1], bps[1:], a, b, order)

    total = None
    stack = [(float(lo), float(hi), 0) for lo, hi in zip(bps[:-1], bps[1:])]
    while stack:
        lo, hi, depth = stack.pop()
        lo_a, hi_a = np.array([lo]), np.array([hi])
        coarse = _integrate_outer(fn, levels, lo_a, hi_a, a, b, order)
        fine = _integrate_outer(fn, levels, lo_a, hi_a, a, b, order + 2)
        err = float(np.max(np.abs(fine - coarse)))
        if err <= tol * max(1.0, float(np.max(np.abs(fine)))):
            total = fine if total is None else total + fine
            continue
        if depth >= max_depth:
            raise QuadratureError(
                f"cell [{lo:.6g}, {hi:.6g}] still off by {err:.3g} after {depth} bisections",
                worst_cell=(lo, hi), estimate=total)
        mid = 0.5 * (lo + hi)
        stack.append((lo, mid, depth + 1))
        stack.append((mid, hi, depth + 1))
    return total


# ---------- risk oracle ----------

def problem_planes(problem, theta) -> List[Plane]:
    """Non-degenerate neuron hyperplanes plus every data constraint."""
    planes: List[Plane] = []
    for i in range(problem.shape.H):
        w = theta.w[i].astype(np.float64)
        if np.any(w != 0.0):
            planes.append((w, float(theta.b[i])))
    for data in (problem.target, problem.density):
        if isinstance(data, PiecewisePoly):
            for c in data.constraints():
                planes.append((np.array([float(t) for t in c.normal]), float(c.offset)))
    return planes


def risk_integrand(problem, theta) -> VectorFn:
    """Columns [ (N - f)^2 p, G_w (H*d), G_b (H), G_v (H), G_c ] at each point."""
    s = problem.shape
    w, b, v, c = theta.w, theta.b, theta.v, theta.c

    def fn(X: np.ndarray) -> np.ndarray:
        z = X @ w.T + b
        act = z > 0.0
        relu = np.where(act, z, 0.0)
        res = c + relu @ v - problem.target_values(X)
        rp = res * problem.density_values(X)
        gate = act * v * rp[:, None]
        gw = 2.0 * gate[:, :, None] * X[:, None, :]
        return np.hstack([(res * rp)[:, None], gw.reshape(X.shape[0], s.H * s.d),
                          2.0 * gate, 2.0 * relu * rp[:, None], 2.0 * rp[:, None]])

    return fn


def risk_and_gradient(problem, theta, order: int | None = None) -> Tuple[float, np.ndarray]:
    d = problem.shape.d
    a, b = problem.shape.bounds()
    adaptive = d >= 3 or not problem.piecewise
    n = order or (ADAPTIVE_ORDER if adaptive else DEFAULT_ORDER)
    out = integrate_vector(risk_integrand(problem, theta), d, problem_planes(problem, theta), a, b,
                           order=n, adaptive=adaptive)
    grad = out[1:].copy()
    # rows of degenerate neurons integrate an identically zero column
    for i in range(problem.shape.H):
        if not np.any(theta.w[i] != 0.0) and theta.b[i] == 0.0:
            grad[i * d:(i + 1) * d] = 0.0
            grad[problem.shape.off_b + i] = 0.0
            grad[problem.shape.off_v + i] = 0.0
    return max(float(out[0]), 0.0), grad
