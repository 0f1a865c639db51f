# reluflow
# See LICENSE for details.

# ===================== core/instances.py =====================
# Seeded problem/parameter generators and the degeneration seed search

from __future__ import annotations

import logging
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np

from core.exact_risk import Problem
from core.gf_solver import SolverConfig, Trajectory, solve
from core.network_model import NetworkShape, ParamVector, degenerate_set, kinks_1d
from core.piecewise_poly import AffineConstraint, Piece, PiecewisePoly, Poly

log = logging.getLogger(__name__)

KINK_GAP = Fraction(1, 1000)
MIN_SLOPE = 0.1


def _q(rng: np.random.Generator, lo: int, hi: int, den: int) -> Fraction:
    return Fraction(int(rng.integers(lo, hi + 1)), den)


def _interval_pieces(cuts: List[Fraction], polys: List[Poly]) -> PiecewisePoly:
    """One piece per cell [cuts[k], cuts[k+1]] of the line."""
    pieces = []
    for lo, hi, poly in zip(cuts[:-1], cuts[1:], polys):
        cons = (AffineConstraint((Fraction(1),), -lo), AffineConstraint((Fraction(-1),), hi))
        pieces.append(Piece(cons, poly))
    return PiecewisePoly(1, tuple(pieces))


def random_problem_1d(seed: int, max_target_pieces: int = 3, max_density_pieces: int = 2,
                      H: Optional[int] = None, evaluator: str = "exact-1d") -> Problem:
    """
    d = 1 on [0, 1]: a target with at most 3 quadratic pieces and a strictly
    positive density with at most 2 affine pieces, all coefficients dyadic.
    """
    rng = np.random.default_rng([seed, 1])
    if H is None:
        H = int(rng.integers(1, 5))
    shape = NetworkShape(1, H, Fraction(0), Fraction(1))

    def cuts(max_pieces: int) -> List[Fraction]:
        m = int(rng.integers(1, max_pieces + 1))
        inner = sorted({_q(rng, 1, 15, 16) for _ in range(m - 1)})
        return [Fraction(0)] + inner + [Fraction(1)]

    f_cuts = cuts(max_target_pieces)
    f_polys = [Poly.from_coeffs_1d([_q(rng, -8, 8, 4), _q(rng, -8, 8, 4), _q(rng, -4, 4, 4)])
               for _ in range(len(f_cuts) - 1)]
    p_cuts = cuts(max_density_pieces)
    # c0 >= 1 and |c1| <= 1/2 keep each affine piece positive on [0, 1]
    p_polys = [Poly.from_coeffs_1d([_q(rng, 4, 8, 4), _q(rng, -2, 2, 4)]) for _ in range(len(p_cuts) - 1)]
    return Problem(shape, _interval_pieces(f_cuts, f_polys), _interval_pieces(p_cuts, p_polys), evaluator)


def random_theta(problem: Problem, seed: int, scale: float = 1.0, max_tries: int = 1000) -> ParamVector:
    """
    Non-degenerate theta whose kinks keep KINK_GAP away from every data
    breakpoint, with |w_i| >= MIN_SLOPE so an h-perturbation moves no kink
    across a breakpoint.
    """
    shape = problem.shape
    rng = np.random.default_rng([seed, 2])
    bps = [float(t) for t in problem.data_breakpoints] if shape.d == 1 and problem.piecewise else []
    for _ in range(max_tries):
        theta = ParamVector(scale * rng.standard_normal(shape.n_params), shape)
        if degenerate_set(theta) or np.any(np.abs(theta.w) < MIN_SLOPE):
            continue
        if shape.d == 1 and any(abs(k - t) < KINK_GAP for k in kinks_1d(theta) for t in bps):
            continue
        return theta
    raise RuntimeError(f"no admissible theta for seed {seed} after {max_tries} draws")


def random_problem_nd(seed: int, d: int, H: Optional[int] = None,
                      evaluator: str = "elimination") -> Problem:
    """d in {2, 3} on [0, 1]^d: affine target split by one hyperplane, positive piecewise-constant density."""
    if d not in (2, 3):
        raise ValueError(f"random_problem_nd handles d in {{2, 3}}, got {d}")
    rng = np.random.default_rng([seed, 3, d])
    if H is None:
        H = int(rng.integers(1, 3))
    shape = NetworkShape(d, H, Fraction(0), Fraction(1))
    normal = tuple(_q(rng, -4, 4, 2) for _ in range(d))
    if not any(normal):
        normal = (Fraction(1),) + normal[1:]
    offset = _q(rng, -2, 2, 4)
    split = AffineConstraint(normal, offset)
    other = AffineConstraint(tuple(-n for n in normal), -offset)

    def affine() -> Poly:
        return Poly.from_affine([_q(rng, -4, 4, 4) for _ in range(d)], _q(rng, -4, 4, 4))

    target = PiecewisePoly(d, (Piece((split,), affine()), Piece((other,), affine())))
    density = PiecewisePoly(d, (Piece((), Poly.constant(d, _q(rng, 2, 6, 4))),
                                Piece((split,), Poly.constant(d, _q(rng, 0, 4, 4)))))
    return Problem(shape, target, density, evaluator)


def degenerate_instance(seed: int) -> Tuple[Problem, ParamVector]:
    """A random d = 1 instance with at least one neuron frozen to (w_i, b_i) = 0."""
    problem = random_problem_1d(seed, H=int(np.random.default_rng([seed, 4]).integers(1, 5)))
    theta = random_theta(problem, seed)
    rng = np.random.default_rng([seed, 5])
    k = int(rng.integers(1, problem.shape.H + 1))
    for i in sorted(rng.choice(problem.shape.H, size=k, replace=False).tolist()):
        theta = theta.freeze(i)
    return problem, theta


def unit_problem(H: int = 1, target: Optional[Poly] = None) -> Problem:
    shape = NetworkShape(1, H, Fraction(0), Fraction(1))
    f = PiecewisePoly.from_poly(target if target is not None else Poly.zero(1))
    return Problem(shape, f, PiecewisePoly.constant(1, 1))


def c_only_problem() -> Problem:
    """f = 0, density 1 on [0, 1], one hidden neuron."""
    return unit_problem()


def c_only_theta(c0: float = 1.0) -> ParamVector:
    """theta = (0, 0, 0, c0): the flow reduces to c' = -2c."""
    return ParamVector.from_parts(c_only_problem().shape, [0.0], [0.0], [0.0], c0)


def perfect_fit() -> Tuple[Problem, ParamVector]:
    """f(x) = x realised exactly by theta = (1, 0, 1, 0)."""
    problem = unit_problem(target=Poly.variable(1, 0))
    return problem, ParamVector.from_parts(problem.shape, [1.0], [0.0], [1.0], 0.0)


def perturbed_fit(seed: int, scale: float = 0.1) -> Tuple[Problem, ParamVector]:
    """The perfect-fit instance started from a seeded perturbation of its minimiser."""
    problem, theta = perfect_fit()
    rng = np.random.default_rng([seed, 6])
    return problem, theta.with_theta(theta.theta + scale * rng.uniform(-1.0, 1.0, theta.theta.size))


def engineered_degeneration() -> Tuple[Problem, ParamVector]:
    """
    [-1, 1], f = -1, density 1, theta = (w, b, v, c) = (0, 0.01, 1, 0).
    w stays 0 by symmetry while the positive residual drives b through 0
    near t = 0.0025.
    """
    shape = NetworkShape(1, 1, Fraction(-1), Fraction(1))
    problem = Problem(shape, PiecewisePoly.constant(1, -1), PiecewisePoly.constant(1, 1))
    return problem, ParamVector.from_parts(shape, [0.0], [0.01], [1.0], 0.0)


def search_degenerating_seed(max_seeds: int = 50, t_max: float = 1.0, start: int = 0,
                             cfg: Optional[SolverConfig] = None) -> Tuple[int, Problem, ParamVector, Trajectory]:
    """
    Scan seeds for a run in which a neuron degenerates in finite time.

    Each candidate uses the symmetric domain [-1, 1], w_0 = 0, small b_0 > 0
    and a constant target below the initial output, so the residual is
    positive and the flow pushes b towards 0 while w stays at 0.
    """
    cfg = cfg or SolverConfig(t_max=t_max)
    shape = NetworkShape(1, 1, Fraction(-1), Fraction(1))
    density = PiecewisePoly.constant(1, 1)
    for seed in range(start, start + max_seeds):
        rng = np.random.default_rng([seed, 7])
        b0 = float(rng.uniform(0.0, 0.1))
        v0 = float(rng.uniform(0.5, 1.5))
        c0 = float(rng.uniform(-0.5, 0.5))
        f0 = Fraction(c0 + v0 * b0 - float(rng.uniform(0.5, 1.5))).limit_denominator(1 << 20)
        problem = Problem(shape, PiecewisePoly.constant(1, f0), density)
        theta = ParamVector.from_parts(shape, [0.0], [b0], [v0], c0)
        traj = solve(problem, theta, cfg)
        if traj.events:
            log.info("seed %d degenerates neuron %d at t=%.6g", seed, traj.events[0].neuron, traj.events[0].t)
            return seed, problem, theta, traj
        log.debug("seed %d: no degeneration before t=%.3g", seed, traj.t_end)
    raise RuntimeError(f"no degenerating run among seeds {start}..{start + max_seeds - 1}")
