import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import Polynomial

from core import corpus
from core.bspline import spline_from_terms
from core.errors import DomainError
from core.funcspace import GAUSS_ORDER, CallableFunc, PiecewiseFunc, QuadratureRule, lq_norm
from core.localpoly import (
    averaged_modulus,
    best_poly_error_oracle,
    modulus,
    near_best_poly,
    piecewise_projector,
    projection_errors,
)
from core.partition import Interval, build_dyadic, omega_cell_ranges

WINDOW = Interval(-1.0, 2.0)
UNIT = Interval(0.0, 1.0)
SHAPES = ("bump", "cusp05", "step", "sawtooth_2", "logsing")


def poly_func(*coef):
    p = Polynomial(coef)
    return CallableFunc(lambda x: p(x), "poly", WINDOW)


@pytest.fixture(scope="module")
def partition():
    return build_dyadic(WINDOW, 8, 2)


@pytest.fixture(scope="module")
def rule(partition):
    return QuadratureRule.from_partition(partition, GAUSS_ORDER)


def test_projection_reproduces_polynomials(rule):
    f = poly_func(1.0, 2.0, -1.0)
    approx = near_best_poly(f, Interval(-0.3, 1.7), 3, 2, rule)
    assert approx.err == pytest.approx(0.0, abs=1e-12)


def test_constant_fit_of_identity(rule):
    approx = near_best_poly(poly_func(0, 1), UNIT, 1, 2, rule)
    assert approx.poly(0.3) == pytest.approx(0.5)
    assert approx.err == pytest.approx(1.0 / math.sqrt(12.0), rel=1e-12)


def test_projection_is_near_best_for_abs(rule):
    f = CallableFunc(lambda x: np.abs(x - 0.5), "abs", WINDOW, [0.5])
    approx = near_best_poly(f, UNIT, 1, 1, rule)
    oracle = best_poly_error_oracle(f, UNIT, 1, 1, rule)
    assert oracle.value == pytest.approx(0.125, abs=1e-4)
    assert approx.err <= approx.near_best_constant * oracle.value


def test_oracle_known_values(rule):
    assert best_poly_error_oracle(poly_func(0, 1), UNIT, 1, 1, rule).value == pytest.approx(0.25, abs=1e-4)
    quadratic = best_poly_error_oracle(poly_func(0, 0, 1), UNIT, 2, 2, rule)
    assert quadratic.converged
    assert quadratic.value == pytest.approx(1.0 / (6.0 * math.sqrt(5.0)), rel=1e-10)


def test_oracle_on_polynomial_is_zero(rule):
    res = best_poly_error_oracle(poly_func(0.5, -1.0), Interval(-0.5, 1.5), 2, 1, rule)
    assert res.value == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("fn_id", SHAPES)
@pytest.mark.parametrize("k", [2, 3])
def test_near_best_constant(partition, rule, fn_id, k):
    f = corpus.resolve(fn_id, partition)
    for J in (Interval(0.0, 1.0), Interval(0.2, 0.65), Interval(0.45, 0.55)):
        approx = near_best_poly(f, J, k, 1, rule)
        oracle = best_poly_error_oracle(f, J, k, 1, rule)
        assert approx.err <= approx.near_best_constant * oracle.value + 1e-12


def test_near_best_constant_is_frozen(constants, rule):
    approx = near_best_poly(corpus.bump(), UNIT, 2, 2, rule)
    assert approx.near_best_constant == constants["near_best_A"]


def test_modulus_of_identity(rule):
    assert modulus(poly_func(0, 1), UNIT, 1, 1, rule) == pytest.approx(0.25, abs=1e-6)


def test_modulus_annihilates_polynomials(rule):
    assert modulus(poly_func(0.3, -2.0), Interval(-0.5, 1.5), 2, 2, rule) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("fn_id", SHAPES)
@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("q", [1, 2])
def test_modulus_bounded_by_local_error(partition, rule, fn_id, k, q):
    f = corpus.resolve(fn_id, partition)
    rng = np.random.default_rng(11)
    for _ in range(3):
        a, b = np.sort(rng.uniform(0.0, 1.0, 2))
        J = Interval(a, max(b, a + 0.05))
        w = modulus(f, J, k, q, rule)
        e = best_poly_error_oracle(f, J, k, q, rule).value
        assert w <= 2 ** k * e * (1 + 1e-6) + 1e-9


@pytest.mark.parametrize("fn_id", ["bump", "sawtooth_2"])
def test_local_error_bounded_by_modulus(partition, rule, constants, fn_id):
    f = corpus.resolve(fn_id, partition)
    bound = constants["whitney_cW"] * constants["headroom"]
    for J in (Interval(0.1, 0.3), Interval(0.3, 0.8), Interval(0.0, 1.0)):
        e = best_poly_error_oracle(f, J, 2, 2, rule).value
        w = modulus(f, J, 2, 2, rule)
        assert e <= bound * w


@pytest.mark.parametrize("fn_id", SHAPES)
def test_averaged_modulus_equivalent(partition, rule, fn_id):
    f = corpus.resolve(fn_id, partition)
    for q in (1, 2):
        w = modulus(f, UNIT, 2, q, rule)
        avg = averaged_modulus(f, UNIT, 2, q, rule)
        assert w > 0
        assert 0.1 <= avg / w <= 10.0


def test_polynomial_norm_equivalence(rule, constants):
    rng = np.random.default_rng(5)
    bound = constants["poly_norm_equiv"] * constants["headroom"]
    for _ in range(200):
        k = int(rng.integers(2, 5))
        p = Polynomial(rng.standard_normal(k))
        a, b = np.sort(rng.uniform(-1.0, 2.0, 2))
        if b - a < 0.01:
            continue
        J = Interval(a, b)
        f = CallableFunc(lambda x: p(x), "p", WINDOW)
        norms = {r: lq_norm(f, J, r, rule) * (J.length ** (-1.0 / r) if np.isfinite(r) else 1.0) for r in (1, 2, np.inf)}
        for r in norms:
            for s in norms:
                assert norms[r] <= bound * norms[s]


def test_markov_inequality(rule, constants):
    rng = np.random.default_rng(9)
    for _ in range(100):
        k = int(rng.integers(2, 5))
        p = Polynomial(rng.standard_normal(k))
        a, b = np.sort(rng.uniform(-1.0, 2.0, 2))
        if b - a < 0.01:
            continue
        J = Interval(a, b)
        f = CallableFunc(lambda x: p(x), "p", WINDOW)
        df = CallableFunc(lambda x: p.deriv()(x), "dp", WINDOW)
        for r in (1, 2):
            assert lq_norm(df, J, r, rule) <= constants["markov_ck"] / J.length * lq_norm(f, J, r, rule) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=-5, max_value=5, allow_nan=False), st.floats(min_value=-5, max_value=5, allow_nan=False))
def test_projection_is_linear(a, b):
    rule = QuadratureRule.from_partition(build_dyadic(WINDOW, 3, 2))
    f, g = corpus.step(), corpus.sawtooth(1)
    h = CallableFunc(lambda x: a * f(x) + b * g(x), "mix", corpus.UNIT, g.breakpoints)
    J = Interval(0.1, 0.9)
    cf = near_best_poly(f, J, 3, 2, rule).poly.coef
    cg = near_best_poly(g, J, 3, 2, rule).poly.coef
    ch = near_best_poly(h, J, 3, 2, rule).poly.coef
    assert np.allclose(ch, a * cf + b * cg, atol=1e-10)


def test_piecewise_projector_reproduces_level_splines():
    P = build_dyadic(WINDOW, 4, 3)
    rule = QuadratureRule.from_partition(P)
    S = spline_from_terms(P, [(2, 3, 1.0), (2, 10, -0.5), (1, 4, 2.0)])
    f = PiecewiseFunc(S, "S")
    proj = piecewise_projector(f, P, 2, 2, rule.for_function(f))
    x = np.random.default_rng(0).uniform(-1.0, 2.0, 200)
    assert np.allclose(proj(x), S(x), atol=1e-10)


def test_piecewise_projector_of_step(partition, rule):
    f = corpus.step()
    proj = piecewise_projector(f, partition, 3, 1, rule.for_function(f))
    assert proj(np.array([0.21]))[0] == pytest.approx(1.0)
    assert proj(np.array([1.5]))[0] == pytest.approx(0.0)


def test_projection_errors_match_single_intervals(partition, rule):
    f = corpus.cusp(0.5)
    r = rule.for_function(f)
    x = partition.knots(2)
    first, last = omega_cell_ranges(partition, 2)
    errs = projection_errors(f, x[first], x[last], 2, 1.5, r)
    for i in (0, 7, 12, 19):
        single = near_best_poly(f, Interval(x[first[i]], x[last[i]]), 2, 1.5, r).err
        assert errs[i] == pytest.approx(single, rel=1e-10, abs=1e-14)


def test_rejects_bad_arguments(rule):
    with pytest.raises(DomainError):
        near_best_poly(corpus.bump(), UNIT, 2, 0.5, rule)
    with pytest.raises(DomainError):
        near_best_poly(corpus.bump(), Interval(0.5, 0.5), 2, 2, rule)
