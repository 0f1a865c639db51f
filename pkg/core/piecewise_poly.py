# reluflow
# See LICENSE for details.

# ===================== core/piecewise_poly.py =====================
# Multivariate polynomials over QQ (sympy), affine constraints, and sum-semantics piecewise polynomials

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
import sympy
from numpy.polynomial import polynomial as P
from scipy.stats import qmc
from sympy import QQ

log = logging.getLogger(__name__)

MAX_DEGREE = 32

Number = Union[int, float, Fraction]
Exps = Tuple[int, ...]


class DegreeOverflowError(ValueError):
    """A polynomial exceeded the per-variable degree guard."""


class PolyDomainError(ValueError):
    """Bad interval, dimension mismatch or unsupported canonicalisation."""


def parse_rational(value: Any) -> Fraction:
    """Accept "p/q" strings, ints, Fractions, and decimal strings/floats (via their repr)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip().replace("−", "-"))
    raise ValueError(f"not a rational: {value!r}")


def format_rational(q: Fraction) -> str:
    return str(Fraction(q))


# ---------- QQ <-> Fraction ----------

def to_qq(q: Number):
    q = q if isinstance(q, Fraction) else Fraction(q)
    return QQ(q.numerator, q.denominator)


def from_qq(c) -> Fraction:
    c = QQ.convert(c)
    return Fraction(int(QQ.numer(c)), int(QQ.denom(c)))


def _is_exact(x: Sequence) -> bool:
    return all(isinstance(t, (int, Fraction)) and not isinstance(t, bool) for t in x)


@lru_cache(maxsize=None)
def _gens(nvars: int) -> Tuple[sympy.Symbol, ...]:
    # constants keep one generator that never carries a positive exponent
    if nvars == 0:
        return (sympy.Symbol("x_"),)
    return tuple(sympy.symbols(f"x0:{nvars}"))


def _qq_poly(nvars: int, rep: Dict[Exps, Any]) -> sympy.Poly:
    rep = {(e if nvars else (0,)): c for e, c in rep.items() if c}
    if not rep:
        return sympy.Poly(0, *_gens(nvars), domain=QQ)
    return sympy.Poly.from_dict(rep, *_gens(nvars), domain=QQ)


class Poly:
    """
    Polynomial in `nvars` variables over QQ, backed by `sympy.Poly`.

    Arithmetic stays exact and results read back as Fractions; `eval_many`
    is the binary64 view used by the quadrature oracle.
    """

    __slots__ = ("nvars", "rep", "_terms", "_numeric", "_floats")

    def __init__(self, nvars: int, terms: Dict[Exps, Number] | None = None):
        nvars = int(nvars)
        clean: Dict[Exps, Fraction] = {}
        for exps, coef in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars or any(e < 0 for e in exps):
                raise PolyDomainError(f"bad exponent tuple {exps} for {nvars} variables")
            clean[exps] = clean.get(exps, Fraction(0)) + (coef if isinstance(coef, Fraction) else Fraction(coef))
        self._set(nvars, _qq_poly(nvars, {e: to_qq(c) for e, c in clean.items() if c}))

    def _set(self, nvars: int, rep: sympy.Poly):
        self.nvars = nvars
        self.rep = rep
        self._terms = None
        self._numeric = None
        self._floats = None

    @classmethod
    def _wrap(cls, nvars: int, rep: sympy.Poly) -> "Poly":
        p = cls.__new__(cls)
        p._set(nvars, rep)
        return p

    # ---------- constructors ----------

    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls._wrap(nvars, _qq_poly(nvars, {}))

    @classmethod
    def constant(cls, nvars: int, c: Number) -> "Poly":
        return cls._wrap(nvars, _qq_poly(nvars, {(0,) * nvars: to_qq(c)}))

    @classmethod
    def variable(cls, nvars: int, k: int) -> "Poly":
        return cls._wrap(nvars, sympy.Poly(_gens(nvars)[k], *_gens(nvars), domain=QQ))

    @classmethod
    def from_affine(cls, normal: Sequence[Number], offset: Number) -> "Poly":
        n = len(normal)
        rep = {tuple(int(j == k) for j in range(n)): to_qq(coef) for k, coef in enumerate(normal)}
        rep[(0,) * n] = to_qq(offset)
        return cls._wrap(n, _qq_poly(n, rep))

    @classmethod
    def from_coeffs_1d(cls, coeffs: Sequence[Number]) -> "Poly":
        return cls(1, {(k,): c for k, c in enumerate(coeffs)})

    # ---------- inspection ----------

    @property
    def terms(self) -> Dict[Exps, Fraction]:
        """{exponent tuple: Fraction}; zero coefficients never appear."""
        if self._terms is None:
            self._terms = {(m if self.nvars else ()): from_qq(c)
                           for m, c in self.rep.as_dict(native=True).items()}
        return self._terms

    def is_zero(self) -> bool:
        return self.rep.is_zero

    def degree(self, k: int | None = None) -> int:
        if self.is_zero() or not self.nvars:
            return 0
        if k is None:
            return int(self.rep.total_degree())
        return int(self.rep.degree(k))

    def check_degree(self, limit: int = MAX_DEGREE, context: str = "") -> "Poly":
        if self.is_zero() or not self.nvars or max(self.rep.degree_list()) <= limit:
            return self
        exps = next(e for e in self.terms if max(e) > limit)
        where = f" in {context}" if context else ""
        raise DegreeOverflowError(f"term with exponents {exps}{where} exceeds degree {limit}")

    def depends_on(self, k: int) -> bool:
        return self.degree(k) > 0

    def coeffs_1d(self) -> List[Fraction]:
        if self.nvars != 1:
            raise PolyDomainError("coeffs_1d needs a univariate polynomial")
        return [from_qq(c) for c in reversed(self.rep.all_coeffs())]

    def float_coeffs(self) -> np.ndarray:
        """Ascending binary64 coefficients of a univariate polynomial (cached)."""
        if self._floats is None:
            self._floats = np.array([float(c) for c in self.coeffs_1d()])
        return self._floats

    # ---------- arithmetic ----------

    def _lift(self, other) -> sympy.Poly:
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise PolyDomainError(f"variable count mismatch: {self.nvars} vs {other.nvars}")
            return other.rep
        return Poly.constant(self.nvars, other).rep

    def __add__(self, other):
        return Poly._wrap(self.nvars, self.rep + self._lift(other))

    __radd__ = __add__

    def __neg__(self):
        return Poly._wrap(self.nvars, -self.rep)

    def __sub__(self, other):
        return Poly._wrap(self.nvars, self.rep - self._lift(other))

    def __rsub__(self, other):
        return Poly._wrap(self.nvars, self._lift(other) - self.rep)

    def __mul__(self, other):
        if isinstance(other, Poly):
            return Poly._wrap(self.nvars, self.rep * self._lift(other))
        return Poly._wrap(self.nvars, self.rep.mul_ground(to_qq(other)))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise PolyDomainError("negative power")
        return Poly._wrap(self.nvars, self.rep ** int(n))

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.nvars == other.nvars and self.rep == other.rep
        return NotImplemented

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self):
        return f"Poly({self.nvars}, {self.rep.as_expr()})"

    # ---------- calculus / substitution ----------

    def antiderivative(self, k: int) -> "Poly":
        return Poly._wrap(self.nvars, self.rep.integrate(_gens(self.nvars)[k]))

    def substitute_last(self, affine: "Poly") -> "Poly":
        """Replace the last variable by `affine` (a Poly in nvars-1 variables)."""
        n = self.nvars
        if n < 1 or affine.nvars != n - 1:
            raise PolyDomainError("substitute_last expects a polynomial in one fewer variable")
        by_power: Dict[int, Dict[Exps, Any]] = {}
        for m, c in self.rep.as_dict(native=True).items():
            by_power.setdefault(m[-1], {})[m[:-1]] = c
        out = _qq_poly(n - 1, {})
        power = _qq_poly(n - 1, {(0,) * (n - 1): QQ.one})
        for m in range(max(by_power, default=-1) + 1):
            if m in by_power:
                out += _qq_poly(n - 1, by_power[m]) * power
            power = power * affine.rep
        return Poly._wrap(n - 1, out)

    def drop_last(self) -> "Poly":
        if self.depends_on(self.nvars - 1):
            raise PolyDomainError("polynomial still depends on its last variable")
        return Poly._wrap(self.nvars - 1, _qq_poly(self.nvars - 1, {m[:-1]: c for m, c in
                                                                    self.rep.as_dict(native=True).items()}))

    def permute(self, order: Sequence[int]) -> "Poly":
        """New variable j is old variable order[j]."""
        rep = {tuple(m[o] for o in order): c for m, c in self.rep.as_dict(native=True).items()}
        return Poly._wrap(self.nvars, _qq_poly(self.nvars, rep))

    # ---------- evaluation ----------

    def eval(self, x: Sequence[Number]):
        """Exact (Fraction) at rational points, binary64 otherwise."""
        if not self.nvars:
            return self.terms.get((), Fraction(0))
        if _is_exact(x):
            point = tuple(sympy.Rational(Fraction(t).numerator, Fraction(t).denominator) for t in x)
            return from_qq(self.rep.eval(point))
        return float(self.eval_many(np.array([x], dtype=np.float64))[0])

    def eval_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self._numeric is None:
            self._numeric = sympy.lambdify(_gens(self.nvars), self.rep.as_expr(), modules="numpy")
        cols = list(X.T) if self.nvars else [np.zeros(X.shape[0])]
        out = np.asarray(self._numeric(*cols), dtype=np.float64)
        return np.broadcast_to(out, (X.shape[0],)).copy()

    # ---------- literal codec ----------

    def to_literal(self) -> list:
        return [{"exps": list(e), "coef": format_rational(c)} for e, c in sorted(self.terms.items())]

    @classmethod
    def from_literal(cls, nvars: int, items: Iterable[dict]) -> "Poly":
        terms: Dict[Exps, Fraction] = {}
        for item in items:
            exps = tuple(int(e) for e in item["exps"])
            if len(exps) != nvars:
                raise PolyDomainError(f"monomial {list(exps)} does not have {nvars} exponents")
            terms[exps] = terms.get(exps, Fraction(0)) + parse_rational(item["coef"])
        return cls(nvars, terms).check_degree()


def integrate_poly_1d(p: Poly, lo: Number, hi: Number):
    """
    Exact definite integral of a univariate Poly.

    Rational endpoints give a Fraction; any float endpoint gives binary64.
    """
    if p.nvars != 1:
        raise PolyDomainError("integrate_poly_1d needs a univariate polynomial")
    if lo > hi:
        raise PolyDomainError(f"integration bounds reversed: lo={lo} > hi={hi}")
    if _is_exact((lo, hi)):
        anti = p.antiderivative(0)
        return anti.eval((Fraction(hi),)) - anti.eval((Fraction(lo),))
    return definite_integral(p.float_coeffs(), float(lo), float(hi))


def definite_integral(coeffs: np.ndarray, lo: float, hi: float) -> float:
    """∫_lo^hi of an ascending binary64 coefficient array."""
    anti = P.polyint(coeffs)
    return float(P.polyval(hi, anti) - P.polyval(lo, anti))


# ---------- affine constraints ----------

@dataclass(frozen=True)
class AffineConstraint:
    """normal . x + offset >= 0. An all-zero normal is the constant truth value offset >= 0."""
    normal: Tuple[Fraction, ...]
    offset: Fraction

    def __post_init__(self):
        object.__setattr__(self, "normal", tuple(Fraction(t) for t in self.normal))
        object.__setattr__(self, "offset", Fraction(self.offset))

    @property
    def dim(self) -> int:
        return len(self.normal)

    def is_constant(self) -> bool:
        return not any(self.normal)

    def value(self, x: Sequence[Number]):
        total: Any = self.offset
        for n, xj in zip(self.normal, x):
            if n:
                total = total + n * xj
        return total

    def holds(self, x: Sequence[Number]) -> bool:
        return self.value(x) >= 0

    def values_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ np.array([float(n) for n in self.normal]) + float(self.offset)

    def as_poly(self) -> Poly:
        return Poly.from_affine(self.normal, self.offset)

    def to_literal(self) -> dict:
        return {"normal": [format_rational(n) for n in self.normal], "offset": format_rational(self.offset)}


@dataclass(frozen=True)
class Piece:
    constraints: Tuple[AffineConstraint, ...]
    poly: Poly

    def active(self, x) -> bool:
        return all(c.holds(x) for c in self.constraints)


@dataclass(frozen=True)
class PiecewisePoly:
    """
    g(x) = Σ_pieces poly(x) · Π 1[constraint(x) >= 0].

    Pieces overlap additively; any number of constraints per piece is allowed.
    """
    dim: int
    pieces: Tuple[Piece, ...]

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        for piece in self.pieces:
            if piece.poly.nvars != self.dim:
                raise PolyDomainError(f"piece polynomial has {piece.poly.nvars} variables, expected {self.dim}")
            for c in piece.constraints:
                if c.dim != self.dim:
                    raise PolyDomainError(f"constraint of dimension {c.dim} in a {self.dim}-dimensional piecewise polynomial")

    @classmethod
    def constant(cls, dim: int, value: Number) -> "PiecewisePoly":
        return cls(dim, (Piece((), Poly.constant(dim, value)),))

    @classmethod
    def from_poly(cls, poly: Poly) -> "PiecewisePoly":
        return cls(poly.nvars, (Piece((), poly),))

    def constraints(self) -> List[AffineConstraint]:
        return [c for piece in self.pieces for c in piece.constraints]

    def max_degree(self) -> int:
        return max((p.poly.degree() for p in self.pieces), default=0)

    def eval_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros(X.shape[0])
        for piece in self.pieces:
            mask = np.ones(X.shape[0], dtype=bool)
            for c in piece.constraints:
                mask &= c.values_many(X) >= 0
            if mask.any():
                out[mask] += piece.poly.eval_many(X[mask])
        return out

    def to_literal(self) -> dict:
        return {
            "dim": self.dim,
            "pieces": [{"constraints": [c.to_literal() for c in p.constraints],
                        "poly": p.poly.to_literal()} for p in self.pieces],
        }


def pp_from_literal(obj: dict) -> PiecewisePoly:
    dim = int(obj["dim"])
    pieces = []
    for k, raw in enumerate(obj.get("pieces", [])):
        constraints = []
        for c in raw.get("constraints", []):
            normal = [parse_rational(t) for t in c["normal"]]
            if len(normal) != dim:
                raise PolyDomainError(f"pieces[{k}]: constraint normal has {len(normal)} entries, dim is {dim}")
            constraints.append(AffineConstraint(tuple(normal), parse_rational(c.get("offset", 0))))
        pieces.append(Piece(tuple(constraints), Poly.from_literal(dim, raw.get("poly", []))))
    return PiecewisePoly(dim, tuple(pieces))


def pp_to_literal(g: PiecewisePoly) -> dict:
    return g.to_literal()


def eval_pp(g: PiecewisePoly, x: Sequence[Number]):
    """Sum of the polynomials of every piece whose (closed) constraints all hold at x."""
    if len(x) != g.dim:
        raise PolyDomainError(f"point has {len(x)} coordinates, piecewise polynomial has dim {g.dim}")
    total: Any = 0
    for piece in g.pieces:
        if piece.active(x):
            total = total + piece.poly.eval(x)
    return total


# ---------- canonical 1-d form ----------

@dataclass(frozen=True)
class Breakline1D:
    """Strictly increasing breakpoints t_0 = a < ... < t_m = b_dom, one Poly per open cell."""
    breakpoints: Tuple[Fraction, ...]
    polys: Tuple[Poly, ...]

    def __post_init__(self):
        bp = self.breakpoints
        if any(not bp[k] < bp[k + 1] for k in range(len(bp) - 1)):
            raise PolyDomainError("breakpoints must be strictly increasing")
        if len(self.polys) != len(bp) - 1:
            raise PolyDomainError("need exactly one polynomial per cell")

    def cell_index(self, x: Number) -> int:
        k = bisect.bisect_right(self.breakpoints, x) - 1
        return min(max(k, 0), len(self.polys) - 1)

    def eval(self, x: Number):
        return self.polys[self.cell_index(x)].eval((x,))


def canonicalize_1d(g: PiecewisePoly, a: Number, b_dom: Number) -> Breakline1D:
    """Split [a, b_dom] at every constraint root and attach the summed active polynomial per cell."""
    if g.dim != 1:
        raise PolyDomainError(f"canonicalize_1d needs dim 1, got {g.dim}")
    a, b_dom = Fraction(a), Fraction(b_dom)
    points = {a, b_dom}
    for c in g.constraints():
        n = c.normal[0]
        if n != 0:
            root = -c.offset / n
            if a < root < b_dom:
                points.add(root)
    bps = tuple(sorted(points))
    polys = []
    for lo, hi in zip(bps[:-1], bps[1:]):
        mid = (lo + hi) / 2
        acc = Poly.zero(1)
        for piece in g.pieces:
            if piece.active((mid,)):
                acc = acc + piece.poly
        polys.append(acc)
    return Breakline1D(bps, tuple(polys))


# ---------- density audit ----------

def audit_density(g: PiecewisePoly, a: Number, b_dom: Number, n: int = 10_000,
                  tol: float = 1e-12, seed: int = 0) -> float:
    """
    Quasi-random nonnegativity check of an unnormalised density.

    Draws at least n scrambled Sobol points in [a, b_dom]^dim (rounded up to
    a power of two) and logs a warning if any value falls below -tol.
    Returns the smallest sampled value.
    """
    m = int(np.ceil(np.log2(max(n, 2))))
    sampler = qmc.Sobol(d=g.dim, scramble=True, seed=seed)
    X = qmc.scale(sampler.random_base2(m), [float(a)] * g.dim, [float(b_dom)] * g.dim)
    values = g.eval_many(X)
    worst = float(values.min())
    if worst < -tol:
        at = X[int(values.argmin())].tolist()
        log.warning("density nonnegativity audit failed: min %.6g at x=%s over %d points", worst, at, len(X))
    return worst
