# reluflow
# See LICENSE for details.

# ===================== core/semialg_engine.py =====================
# Exact iterated integration of indicator-gated polynomial term sets at a fixed parameter point

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np

from core.exact_risk import EvaluatorError, Problem
from core.network_model import ParamVector, ShapeError, degenerate_set
from core.piecewise_poly import AffineConstraint, PiecewisePoly, Poly, MAX_DEGREE

log = logging.getLogger(__name__)

KINDS = ("eq0", "ge0", "gt0")


@dataclass(frozen=True)
class Factor:
    """Indicator 1_A(affine(x)) with A = {0}, [0, inf) or (0, inf)."""
    kind: str
    affine: AffineConstraint

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown indicator kind {self.kind!r}")

    def test(self, x) -> bool:
        z = self.affine.value(x)
        if self.kind == "eq0":
            return z == 0
        if self.kind == "ge0":
            return z >= 0
        return z > 0

    def normalized(self) -> "Factor":
        """Scale by 1/|first nonzero normal coefficient| (sign-preserving)."""
        lead = next((n for n in self.affine.normal if n != 0), None)
        if lead is None or abs(lead) == 1:
            return self
        s = abs(lead)
        return Factor(self.kind, AffineConstraint(tuple(n / s for n in self.affine.normal), self.affine.offset / s))

    def negated_affine(self) -> AffineConstraint:
        return AffineConstraint(tuple(-n for n in self.affine.normal), -self.affine.offset)


@dataclass(frozen=True)
class AmnTerm:
    rcoef: Fraction
    q: Poly
    factors: Tuple[Factor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rcoef", Fraction(self.rcoef))
        object.__setattr__(self, "factors", tuple(self.factors))
        for f in self.factors:
            if f.affine.dim != self.q.nvars:
                raise ValueError(f"factor of dimension {f.affine.dim} on a term in {self.q.nvars} variables")

    def evaluate(self, x):
        if not all(f.test(x) for f in self.factors):
            return 0
        return self.rcoef * self.q.eval(x)


@dataclass(frozen=True)
class AmnTermSet:
    terms: Tuple[AmnTerm, ...]
    dim: int
    bounds: Tuple[Fraction, Fraction] = (Fraction(0), Fraction(1))

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "bounds", (Fraction(self.bounds[0]), Fraction(self.bounds[1])))
        for t in self.terms:
            if t.q.nvars != self.dim:
                raise ValueError(f"term in {t.q.nvars} variables inside a {self.dim}-dimensional term set")

    def evaluate(self, x):
        total = 0
        for t in self.terms:
            total = total + t.evaluate(x)
        return total

    def __add__(self, other: "AmnTermSet") -> "AmnTermSet":
        if other.dim != self.dim or other.bounds != self.bounds:
            raise ValueError("term sets live on different boxes")
        return AmnTermSet(self.terms + other.terms, self.dim, self.bounds)

    def __len__(self):
        return len(self.terms)


# ---------- affine helpers (coefficient tuples over the remaining variables) ----------

def _affine(normal: Sequence[Fraction], offset: Fraction) -> AffineConstraint:
    return AffineConstraint(tuple(normal), offset)


def _sub(u: AffineConstraint, l: AffineConstraint) -> AffineConstraint:
    return _affine([a - b for a, b in zip(u.normal, l.normal)], u.offset - l.offset)


def _range_over_box(aff: AffineConstraint, lo: Fraction, hi: Fraction) -> Tuple[Fraction, Fraction]:
    mn = mx = aff.offset
    for n in aff.normal:
        if n > 0:
            mn += n * lo
            mx += n * hi
        elif n < 0:
            mn += n * hi
            mx += n * lo
    return mn, mx


# ---------- simplification ----------

def _screen_term(term: AmnTerm, lo: Fraction, hi: Fraction) -> AmnTerm | None:
    """
    Resolve constant and box-decided factors; None if the term vanishes a.e. on the box.
    Boundary-only regions (affine max == 0 on a non-constant form) count as empty.
    """
    if term.rcoef == 0 or term.q.is_zero():
        return None
    kept: Dict[Tuple[str, AffineConstraint], Factor] = {}
    for f in term.factors:
        f = f.normalized()
        aff = f.affine
        if aff.is_constant():
            z = aff.offset
            ok = z == 0 if f.kind == "eq0" else (z >= 0 if f.kind == "ge0" else z > 0)
            if not ok:
                return None
            continue
        if f.kind == "eq0":
            return None
        mn, mx = _range_over_box(aff, lo, hi)
        if mx <= 0:
            return None
        if (f.kind == "ge0" and mn >= 0) or (f.kind == "gt0" and mn > 0):
            continue
        kept[(f.kind, aff)] = f

    # ge0 and gt0 on the same form agree a.e.
    factors = []
    affs = set()
    for (kind, aff), f in kept.items():
        if kind == "ge0" and ("gt0", aff) in kept:
            continue
        factors.append(f)
        affs.add(aff)
    for f in factors:
        if f.negated_affine() in affs:
            return None
    factors.sort(key=lambda f: (f.kind, f.affine.normal, f.affine.offset))
    return AmnTerm(term.rcoef, term.q, tuple(factors))


def simplify(ts: AmnTermSet) -> AmnTermSet:
    """Screen every term, then merge terms with identical indicator sets."""
    lo, hi = ts.bounds
    merged: Dict[Tuple[Factor, ...], Poly] = {}
    order: List[Tuple[Factor, ...]] = []
    for t in ts.terms:
        t = _screen_term(t, lo, hi)
        if t is None:
            continue
        key = t.factors
        if key not in merged:
            merged[key] = Poly.zero(ts.dim)
            order.append(key)
        merged[key] = merged[key] + t.q * t.rcoef
    terms = tuple(AmnTerm(Fraction(1), merged[k], k) for k in order if not merged[k].is_zero())
    return AmnTermSet(terms, ts.dim, ts.bounds)


# ---------- elimination ----------

def _bound_poly(aff: AffineConstraint) -> Poly:
    return Poly.from_affine(aff.normal, aff.offset) if aff.dim else Poly.constant(0, aff.offset)


def _dominance(chosen: int, cands: List[AffineConstraint], is_lower: bool) -> List[Factor]:
    """Factors making cands[chosen] the max (lower) or min (upper); ties go to the lowest index."""
    out = []
    me = cands[chosen]
    for t, other in enumerate(cands):
        if t == chosen:
            continue
        diff = _sub(me, other) if is_lower else _sub(other, me)
        out.append(Factor("gt0" if t < chosen else "ge0", diff))
    return out


def _eliminate_term(term: AmnTerm, a: Fraction, b: Fraction, idx: int) -> List[AmnTerm]:
    n = term.q.nvars - 1
    passthrough: List[Factor] = []
    lowers = [_affine([Fraction(0)] * n, a)]
    uppers = [_affine([Fraction(0)] * n, b)]
    for f in term.factors:
        p = f.affine.normal[-1]
        rest = f.affine.normal[:-1]
        if p == 0:
            passthrough.append(Factor(f.kind, _affine(rest, f.affine.offset)))
            continue
        if f.kind == "eq0":
            return []
        # Z + p x_n >= 0  <=>  x_n >= -Z/p (p > 0)  or  x_n <= -Z/p (p < 0)
        root = _affine([-r / p for r in rest], -f.affine.offset / p)
        (lowers if p > 0 else uppers).append(root)

    anti = term.q.antiderivative(n)
    out = []
    for li, lo_aff in enumerate(lowers):
        lo_poly = _bound_poly(lo_aff)
        at_lo = anti.substitute_last(lo_poly)
        lo_dom = _dominance(li, lowers, True)
        for ui, up_aff in enumerate(uppers):
            q = anti.substitute_last(_bound_poly(up_aff)) - at_lo
            if q.is_zero():
                continue
            q.check_degree(MAX_DEGREE, context=f"term {idx} (bounds {li}/{ui})")
            factors = passthrough + lo_dom + _dominance(ui, uppers, False) + [Factor("gt0", _sub(up_aff, lo_aff))]
            out.append(AmnTerm(term.rcoef, q, tuple(factors)))
    return out


def eliminate_last(ts: AmnTermSet) -> AmnTermSet:
    """
    Integrate the last variable over [a, b_dom].

    Each term splits into one term per (active lower bound, active upper
    bound) choice; the result equals the integral pointwise almost everywhere.
    """
    if ts.dim < 1:
        raise ValueError("nothing left to eliminate")
    a, b = ts.bounds
    new_terms: List[AmnTerm] = []
    for k, term in enumerate(ts.terms):
        new_terms.extend(_eliminate_term(term, a, b, k))
    out = simplify(AmnTermSet(tuple(new_terms), ts.dim - 1, ts.bounds))
    log.debug("eliminated x%d: %d terms -> %d terms", ts.dim - 1, len(ts.terms), len(out.terms))
    return out


def integrate_termset(ts: AmnTermSet) -> Fraction:
    """Integrate every variable out; the remaining constant is returned exactly."""
    cur = simplify(ts)
    while cur.dim:
        cur = eliminate_last(cur)
    return sum((t.rcoef * t.q.terms.get((), Fraction(0)) for t in cur.terms), Fraction(0))


def permute_variables(ts: AmnTermSet, order: Sequence[int]) -> AmnTermSet:
    """New variable j is old variable order[j]."""
    if sorted(order) != list(range(ts.dim)):
        raise ValueError(f"{list(order)} is not a permutation of 0..{ts.dim - 1}")
    terms = []
    for t in ts.terms:
        factors = tuple(Factor(f.kind, _affine([f.affine.normal[o] for o in order], f.affine.offset))
                        for f in t.factors)
        terms.append(AmnTerm(t.rcoef, t.q.permute(order), factors))
    return AmnTermSet(tuple(terms), ts.dim, ts.bounds)


# ---------- risk integrand assembly ----------

def _pp_terms(g: PiecewisePoly, sign: int = 1) -> List[Tuple[Poly, Tuple[Factor, ...]]]:
    return [(piece.poly * sign, tuple(Factor("ge0", c) for c in piece.constraints)) for piece in g.pieces]


def _preactivation(theta_q: Sequence[Fraction], d: int, H: int, i: int) -> AffineConstraint:
    return _affine(theta_q[i * d:(i + 1) * d], theta_q[H * d + i])


def _check_problem(problem: Problem, theta: ParamVector):
    d = problem.shape.d
    if d > 3:
        raise EvaluatorError(f"elimination evaluator handles d <= 3, got d={d}")
    if not isinstance(problem.target, PiecewisePoly) or not isinstance(problem.density, PiecewisePoly):
        raise EvaluatorError("elimination evaluator needs piecewise-polynomial target and density")
    if theta.shape != problem.shape:
        raise ShapeError(f"theta has shape {theta.shape}, problem expects {problem.shape}")


def residual_terms(problem: Problem, theta: ParamVector) -> List[Tuple[Poly, Tuple[Factor, ...]]]:
    """(N - f) as gated polynomials; max{z, 0} = z * 1(z > 0); degenerate neurons drop out."""
    s = problem.shape
    th = theta.as_fractions()
    d, H = s.d, s.H
    out: List[Tuple[Poly, Tuple[Factor, ...]]] = []
    if th[s.off_c]:
        out.append((Poly.constant(d, th[s.off_c]), ()))
    dead = degenerate_set(theta)
    for i in range(H):
        v = th[s.off_v + i]
        if i in dead or v == 0:
            continue
        z = _preactivation(th, d, H, i)
        out.append((z.as_poly() * v, (Factor("gt0", z),)))
    out.extend(_pp_terms(problem.target, -1))
    return out


def _weighted(problem: Problem, gated: List[Tuple[Poly, Tuple[Factor, ...]]]) -> AmnTermSet:
    s = problem.shape
    terms = []
    for q1, f1 in gated:
        for q2, f2 in _pp_terms(problem.density):
            terms.append(AmnTerm(Fraction(1), q1 * q2, f1 + f2))
    return AmnTermSet(tuple(terms), s.d, (s.a, s.b_dom))


def risk_termset(problem: Problem, theta: ParamVector) -> AmnTermSet:
    """(N - F)^2 * p as a term set on the cube."""
    res = residual_terms(problem, theta)
    squared = [(q1 * q2, f1 + f2) for q1, f1 in res for q2, f2 in res]
    return _weighted(problem, squared)


def risk_by_elimination(problem: Problem, theta: ParamVector) -> float:
    _check_problem(problem, theta)
    value = integrate_termset(risk_termset(problem, theta))
    return max(float(value), 0.0)


def gradient_by_elimination(problem: Problem, theta: ParamVector) -> np.ndarray:
    """Every generalized-gradient component as an eliminated term set; degenerate rows stay exactly 0."""
    _check_problem(problem, theta)
    s = problem.shape
    d, H = s.d, s.H
    th = theta.as_fractions()
    res = residual_terms(problem, theta)
    grad = np.zeros(s.n_params)
    dead = degenerate_set(theta)

    def integral(mult: Poly, gates: Tuple[Factor, ...]) -> Fraction:
        gated = [(mult * q, gates + f) for q, f in res]
        return integrate_termset(_weighted(problem, gated))

    one = Poly.constant(d, 1)
    for i in range(H):
        if i in dead:
            continue
        z = _preactivation(th, d, H, i)
        gate = (Factor("gt0", z),)
        v = th[s.off_v + i]
        if v != 0:
            base = integral(one, gate)
            grad[s.off_b + i] = float(2 * v * base)
            for j in range(d):
                grad[i * d + j] = float(2 * v * integral(Poly.variable(d, j), gate))
        grad[s.off_v + i] = float(2 * integral(z.as_poly(), gate))
    grad[s.off_c] = float(2 * integral(one, ()))
    return grad
