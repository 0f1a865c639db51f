from fractions import Fraction

import numpy as np
import pytest

from core.exact_risk import EvaluatorError, Problem, gradient, risk
from core.instances import random_problem_1d, random_problem_nd, random_theta
from core.network_model import NetworkShape, ParamVector
from core.piecewise_poly import AffineConstraint, PiecewisePoly, Poly
from core.semialg_engine import (AmnTerm, AmnTermSet, Factor, eliminate_last, integrate_termset,
                                 permute_variables, risk_termset, simplify)


def factor(kind, normal, offset=0):
    return Factor(kind, AffineConstraint(tuple(Fraction(n) for n in normal), Fraction(offset)))


def test_eliminate_gated_linear_term():
    term = AmnTerm(1, Poly.variable(2, 1), (factor("ge0", [1, -1]),))
    out = eliminate_last(AmnTermSet((term,), 2))
    assert out.dim == 1
    for x in (Fraction(0), Fraction(1, 3), Fraction(1, 2), Fraction(1)):
        assert out.evaluate((x,)) == x * x / 2


def test_integrate_constant_term():
    assert integrate_termset(AmnTermSet((AmnTerm(1, Poly.constant(1, 1)),), 1)) == 1


def test_negative_halfline_collapses():
    ts = AmnTermSet((AmnTerm(1, Poly.constant(1, 1), (factor("ge0", [-1]),)),), 1)
    assert integrate_termset(ts) == 0


def test_eq0_factor_is_null_set():
    ts = AmnTermSet((AmnTerm(1, Poly.constant(1, 1), (factor("eq0", [1], Fraction(-1, 2)),)),), 1)
    assert integrate_termset(ts) == 0


def test_opposite_strict_factors_screened_out():
    ts = AmnTermSet((AmnTerm(1, Poly.variable(2, 0), (factor("gt0", [1, -1]), factor("gt0", [-1, 1]))),), 2)
    assert len(simplify(ts)) == 0


def test_pointwise_integral_with_two_upper_bounds():
    # x2 runs up to min(2 x1 - 1/4, 3/4); integrand 3/2 x1 x2
    term = AmnTerm(Fraction(3, 2), Poly.variable(2, 0) * Poly.variable(2, 1),
                   (factor("gt0", [2, -1], Fraction(-1, 4)), factor("ge0", [0, -1], Fraction(3, 4))))
    out = eliminate_last(AmnTermSet((term,), 2))
    for x1, top in ((Fraction(1, 5), Fraction(3, 20)), (Fraction(1, 2), Fraction(3, 4)),
                    (Fraction(9, 10), Fraction(3, 4))):
        assert out.evaluate((x1,)) == Fraction(3, 4) * x1 * top * top
    assert out.evaluate((Fraction(1, 10),)) == 0


def test_fubini_order_independence():
    ts = AmnTermSet((AmnTerm(1, Poly.variable(2, 0) ** 2 * Poly.variable(2, 1),
                             (factor("gt0", [1, -2], Fraction(1, 3)),)),
                     AmnTerm(Fraction(-1, 5), Poly.constant(2, 1), (factor("ge0", [1, 1], -1),))), 2)
    assert integrate_termset(ts) == integrate_termset(permute_variables(ts, [1, 0]))


def test_permutation_validated():
    with pytest.raises(ValueError):
        permute_variables(AmnTermSet((), 2), [0, 0])


def _d2_zero_target(w, b=0.0, v=1.0, c=0.0):
    shape = NetworkShape(2, 1)
    problem = Problem(shape, PiecewisePoly.constant(2, 0), PiecewisePoly.constant(2, 1), "elimination")
    return problem, ParamVector.from_parts(shape, [w], [b], [v], c)


@pytest.mark.parametrize("w, expected", [((1, 0), Fraction(1, 3)), ((1, -1), Fraction(1, 12))])
def test_d2_hand_values(w, expected):
    problem, th = _d2_zero_target(w)
    assert integrate_termset(risk_termset(problem, th)) == expected
    assert risk(problem, th) == pytest.approx(float(expected), rel=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_elimination_equals_exact_1d(seed):
    problem = random_problem_1d(seed)
    th = random_theta(problem, seed)
    exact = risk(problem, th)
    elim = risk(problem.with_evaluator("elimination"), th)
    assert elim == pytest.approx(exact, rel=1e-12, abs=1e-15)
    np.testing.assert_allclose(gradient(problem.with_evaluator("elimination"), th), gradient(problem, th),
                               rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("seed", range(3))
def test_elimination_gradient_against_quadrature_d2(seed):
    problem = random_problem_nd(seed, 2)
    th = random_theta(problem, seed)
    g_elim = gradient(problem, th)
    g_quad = gradient(problem.with_evaluator("quadrature"), th)
    np.testing.assert_allclose(g_elim, g_quad, atol=1e-6 * (1 + np.max(np.abs(g_quad))))


def test_degenerate_rows_zero_in_elimination():
    problem, th = _d2_zero_target((0, 0), b=0.0, v=2.0, c=1.0)
    g = gradient(problem, th)
    assert list(g[:4]) == [0.0, 0.0, 0.0, 0.0]
    assert g[4] == 2.0


def test_elimination_limited_to_d3():
    shape = NetworkShape(4, 1)
    with pytest.raises(EvaluatorError):
        Problem(shape, PiecewisePoly.constant(4, 0), PiecewisePoly.constant(4, 1), "elimination")


# ---------- random term sets in two variables ----------

def _q(rng, span=4, den=4):
    return Fraction(int(rng.integers(-span * den, span * den + 1)), den)


def _random_termset(rng, n_terms=3):
    x, y = Poly.variable(2, 0), Poly.variable(2, 1)
    terms = []
    for _ in range(n_terms):
        q = Poly.constant(2, _q(rng)) + x * _q(rng) + y * _q(rng) + x * y * _q(rng) + y * y * _q(rng)
        factors = tuple(factor(str(rng.choice(["ge0", "gt0"])), [_q(rng), _q(rng)], _q(rng))
                        for _ in range(int(rng.integers(0, 3))))
        terms.append(AmnTerm(_q(rng, 2, 3), q, factors))
    return AmnTermSet(tuple(terms), 2)


def _fix_first(ts, x1):
    """Restrict a two-variable term set to x1 = const, leaving a term set in x2."""
    terms = []
    for t in ts.terms:
        q = t.q.permute([1, 0]).substitute_last(Poly.constant(1, x1))
        factors = tuple(Factor(f.kind, AffineConstraint((f.affine.normal[1],), f.affine.offset + f.affine.normal[0] * x1))
                        for f in t.factors)
        terms.append(AmnTerm(t.rcoef, q, factors))
    return AmnTermSet(tuple(terms), 1)


# points with a prime denominator never sit on a breakpoint of the small-denominator data
def _points(rng, n):
    return [Fraction(int(k), 1009) for k in rng.integers(1, 1009, n)]


@pytest.mark.parametrize("seed", range(4))
def test_elimination_matches_fiberwise_integral(seed):
    rng = np.random.default_rng([seed, 21])
    ts = _random_termset(rng)
    out = eliminate_last(ts)
    for x1 in _points(rng, 25):
        assert out.evaluate((x1,)) == integrate_termset(_fix_first(ts, x1))


@pytest.mark.parametrize("seed", range(4))
def test_elimination_is_linear(seed):
    rng = np.random.default_rng([seed, 22])
    a, b = _random_termset(rng), _random_termset(rng)
    both, ea, eb = eliminate_last(a + b), eliminate_last(a), eliminate_last(b)
    for x1 in _points(rng, 25):
        assert both.evaluate((x1,)) == ea.evaluate((x1,)) + eb.evaluate((x1,))
    assert integrate_termset(a + b) == integrate_termset(a) + integrate_termset(b)
    scaled = AmnTermSet(tuple(AmnTerm(t.rcoef * 3, t.q, t.factors) for t in a.terms), 2)
    assert integrate_termset(scaled) == 3 * integrate_termset(a)
