# reluflow
# See LICENSE for details.

# ===================== core/network_model.py =====================
# Shallow ReLU network: parameter layout, realization, degenerate neurons, active regions

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import FrozenSet, Sequence, Union

import numpy as np

Real = Union[float, Fraction]


class ShapeError(ValueError):
    """Invalid network shape or parameter vector of the wrong length."""


@dataclass(frozen=True)
class NetworkShape:
    """
    Architecture d -> H -> 1 on the cube [a, b_dom]^d.

    `a` and `b_dom` are kept as Fractions so the exact evaluators can use
    them without rounding; `bounds()` gives the binary64 view.
    """
    d: int
    H: int
    a: Fraction = Fraction(0)
    b_dom: Fraction = Fraction(1)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ShapeError(f"d must be a positive integer, got {self.d!r}")
        if int(self.H) != self.H or self.H < 1:
            raise ShapeError(f"H must be a positive integer, got {self.H!r}")
        object.__setattr__(self, "a", Fraction(self.a))
        object.__setattr__(self, "b_dom", Fraction(self.b_dom))
        if not self.a < self.b_dom:
            raise ShapeError(f"domain requires a < b_dom, got [{self.a}, {self.b_dom}]")

    @property
    def n_params(self) -> int:
        return self.d * self.H + 2 * self.H + 1

    def bounds(self) -> tuple[float, float]:
        return float(self.a), float(self.b_dom)

    # 0-based flat offsets of the four blocks
    @property
    def off_b(self) -> int:
        return self.H * self.d

    @property
    def off_v(self) -> int:
        return self.H * (self.d + 1)

    @property
    def off_c(self) -> int:
        return self.n_params - 1


@dataclass(frozen=True)
class ParamVector:
    """
    Flat θ with read-only views w (H x d), b (H), v (H), c.

    Storage is 0-based and row-major in w, i.e. w[i, j] = theta[i*d + j].
    The accessors below use the 1-based mapping
    w_{i,j} = θ_{(i-1)d+j}, b_i = θ_{Hd+i}, v_i = θ_{H(d+1)+i}, c = θ_𝔡.
    """
    theta: np.ndarray
    shape: NetworkShape

    def __post_init__(self):
        arr = np.array(self.theta, dtype=np.float64).reshape(-1)
        if arr.size != self.shape.n_params:
            raise ShapeError(f"theta has {arr.size} entries, shape needs {self.shape.n_params}")
        arr.setflags(write=False)
        object.__setattr__(self, "theta", arr)

    # ---------- construction ----------

    @classmethod
    def from_parts(cls, shape: NetworkShape, w, b, v, c) -> "ParamVector":
        w = np.asarray(w, dtype=np.float64).reshape(shape.H, shape.d)
        flat = np.concatenate([w.reshape(-1), np.asarray(b, float).reshape(-1),
                               np.asarray(v, float).reshape(-1), [float(c)]])
        return cls(flat, shape)

    def with_theta(self, theta) -> "ParamVector":
        return ParamVector(theta, self.shape)

    def replace_neuron(self, i: int, w=None, b=None, v=None) -> "ParamVector":
        arr = self.theta.copy()
        s = self.shape
        if w is not None:
            arr[i * s.d:(i + 1) * s.d] = np.asarray(w, float).reshape(-1)
        if b is not None:
            arr[s.off_b + i] = float(b)
        if v is not None:
            arr[s.off_v + i] = float(v)
        return ParamVector(arr, s)

    def freeze(self, i: int) -> "ParamVector":
        """Write exact zeros into w_i and b_i (v_i is left alone)."""
        return self.replace_neuron(i, w=np.zeros(self.shape.d), b=0.0)

    # ---------- views ----------

    @property
    def w(self) -> np.ndarray:
        s = self.shape
        return self.theta[: s.H * s.d].reshape(s.H, s.d)

    @property
    def b(self) -> np.ndarray:
        s = self.shape
        return self.theta[s.off_b: s.off_b + s.H]

    @property
    def v(self) -> np.ndarray:
        s = self.shape
        return self.theta[s.off_v: s.off_v + s.H]

    @property
    def c(self) -> float:
        return float(self.theta[self.shape.off_c])

    # ---------- 1-based accessors ----------

    def flat_index_w(self, i: int, j: int) -> int:
        """0-based storage slot of w_{i,j} (1-based i, j)."""
        return (i - 1) * self.shape.d + (j - 1)

    def flat_index_b(self, i: int) -> int:
        return self.shape.off_b + (i - 1)

    def flat_index_v(self, i: int) -> int:
        return self.shape.off_v + (i - 1)

    def w_ij(self, i: int, j: int) -> float:
        return float(self.theta[self.flat_index_w(i, j)])

    def b_i(self, i: int) -> float:
        return float(self.theta[self.flat_index_b(i)])

    def v_i(self, i: int) -> float:
        return float(self.theta[self.flat_index_v(i)])

    def as_fractions(self) -> list[Fraction]:
        """Exact rational copy of θ (every binary64 is a dyadic rational)."""
        return [Fraction(float(t)) for t in self.theta]

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.theta, other.theta)

    def __hash__(self):
        return hash((self.shape, self.theta.tobytes()))


# ---------- regions ----------

@dataclass(frozen=True)
class ActiveRegion1D:
    """
    Closed interval [lo, hi] standing in for the open set {x : w x + b > 0}.
    Endpoints do not matter for Lebesgue integrals, so they are stored closed.
    """
    lo: Real
    hi: Real
    empty: bool = field(default=False)

    @classmethod
    def make(cls, lo: Real, hi: Real) -> "ActiveRegion1D":
        if lo >= hi:
            return cls(lo, hi, True)
        return cls(lo, hi, False)

    @property
    def length(self) -> Real:
        return 0 if self.empty else self.hi - self.lo


@dataclass(frozen=True)
class HalfspaceRegion:
    """Constraint b_i + w_i . x > 0 intersected with the cube (d >= 2)."""
    normal: tuple
    offset: float
    empty: bool = False

    def contains(self, x: Sequence[float]) -> bool:
        if self.empty:
            return False
        return self.offset + sum(n * xj for n, xj in zip(self.normal, x)) > 0


# ---------- operations ----------

def realize(theta: ParamVector, x: Sequence[float]) -> float:
    """c + Σ_i v_i max{b_i + Σ_j w_ij x_j, 0}, summed in neuron order."""
    s = theta.shape
    w, b, v = theta.w, theta.b, theta.v
    out = theta.c
    for i in range(s.H):
        z = float(b[i])
        for j in range(s.d):
            z += float(w[i, j]) * float(x[j])
        out += float(v[i]) * max(z, 0.0)
    return out


def realize_many(theta: ParamVector, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    z = X @ theta.w.T + theta.b
    return theta.c + np.maximum(z, 0.0) @ theta.v


def neuron_energy(theta: ParamVector, i: int) -> float:
    """e_i(θ) = |b_i| + Σ_j |w_ij| (0-based i)."""
    return float(abs(theta.b[i]) + np.sum(np.abs(theta.w[i])))


def degenerate_set(theta: ParamVector) -> FrozenSet[int]:
    """0-based indices of neurons whose input weights and bias are all exactly 0."""
    w, b = theta.w, theta.b
    return frozenset(i for i in range(theta.shape.H)
                     if b[i] == 0.0 and not np.any(w[i] != 0.0))


def active_region(theta: ParamVector, i: int,
                  exact: bool = False) -> Union[ActiveRegion1D, HalfspaceRegion]:
    """
    Region where neuron i (0-based) is strictly active.

    d = 1: interval endpoints inside [a, b_dom]; with exact=True they are Fractions.
    d >= 2: the halfspace (w_i, b_i), flagged empty for degenerate neurons.
    """
    s = theta.shape
    if not 0 <= i < s.H:
        raise ShapeError(f"neuron index {i} outside 0..{s.H - 1}")
    if s.d >= 2:
        degenerate = i in degenerate_set(theta)
        return HalfspaceRegion(tuple(float(t) for t in theta.w[i]), float(theta.b[i]), degenerate)

    if exact:
        a, bd = s.a, s.b_dom
        w, b = Fraction(float(theta.w[i, 0])), Fraction(float(theta.b[i]))
    else:
        a, bd = s.bounds()
        w, b = float(theta.w[i, 0]), float(theta.b[i])
    return _interval_where_positive(w, b, a, bd)


def _interval_where_positive(w: Real, b: Real, a: Real, bd: Real) -> ActiveRegion1D:
    if w == 0:
        return ActiveRegion1D.make(a, bd) if b > 0 else ActiveRegion1D(a, a, True)
    root = -b / w
    if w > 0:
        return ActiveRegion1D.make(max(a, root), bd)
    return ActiveRegion1D.make(a, min(bd, root))


def kinks_1d(theta: ParamVector, exact: bool = False) -> list:
    """Roots -b_i/w_i strictly inside the domain, one per neuron with w_i != 0."""
    s = theta.shape
    a, bd = (s.a, s.b_dom) if exact else s.bounds()
    out = []
    for i in range(s.H):
        w = float(theta.w[i, 0])
        if w == 0.0:
            continue
        b = float(theta.b[i])
        root = (-Fraction(b) / Fraction(w)) if exact else (-b / w)
        if a < root < bd:
            out.append(root)
    return out


def symmetric_difference_length(r1: ActiveRegion1D, r2: ActiveRegion1D) -> Real:
    """Lebesgue length of r1 Δ r2 for two intervals."""
    len1, len2 = r1.length, r2.length
    if r1.empty or r2.empty:
        return len1 + len2
    inter = max(0, min(r1.hi, r2.hi) - max(r1.lo, r2.lo))
    return len1 + len2 - 2 * inter
