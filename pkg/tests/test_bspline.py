import numpy as np
import pytest

from core import corpus
from core.bspline import (
    BSplineBasis,
    SplineDecomposition,
    decompose,
    deboor_fix,
    dual_functionals,
    eval_bspline,
    quasi_interp,
    quasi_interp_spline,
    reconstruct,
    refine_coefficients,
    spline_from_terms,
    spline_to_pp,
    stable_basis_check,
)
from core.errors import DecompositionError, DomainError
from core.funcspace import CallableFunc, PiecewiseFunc, PiecewisePoly, QuadratureRule
from core.partition import Interval, SupportIndex, build_dyadic, support_interval

WINDOW = (-1.0, 2.0)


def random_spline(P, m, seed):
    rng = np.random.default_rng(seed)
    basis = BSplineBasis(P, m)
    c = rng.standard_normal(basis.size)
    return basis, c, spline_to_pp(basis, c)


def test_hat_function():
    P = build_dyadic((0.0, 2.5), 0, 2)
    basis = BSplineBasis(P, 0)
    Q = SupportIndex(0, 0)
    assert eval_bspline(basis, Q, 0.5) == pytest.approx(1.0)
    assert eval_bspline(basis, Q, 0.25, nu=1) == pytest.approx(2.0)
    assert eval_bspline(basis, Q, 1.5) == 0.0


def test_quadratic_bspline_value():
    P = build_dyadic((0.0, 7.0), 0, 3)
    assert eval_bspline(BSplineBasis(P, 0), SupportIndex(0, 0), 1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_partition_of_unity_inside(k):
    P = build_dyadic(WINDOW, 2, k)
    basis = BSplineBasis(P, 1)
    x = basis.knots
    pts = np.linspace(x[k - 1], x[basis.ncells - k + 1], 97)[:-1]
    total = np.asarray(basis.design_matrix(pts).sum(axis=1)).ravel()
    assert np.allclose(total, 1.0, atol=1e-12)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_dual_functionals_are_biorthogonal(k):
    P = build_dyadic(WINDOW, 1, k)
    basis = BSplineBasis(P, 1)
    gram = np.stack([dual_functionals(basis, spline_to_pp(basis, e)) for e in np.eye(basis.size)])
    assert np.allclose(gram, np.eye(basis.size), atol=1e-8)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_dual_functionals_of_one(k):
    P = build_dyadic(WINDOW, 1, k)
    basis = BSplineBasis(P, 1)
    one = PiecewisePoly(basis.knots, np.ones((1, basis.ncells)))
    assert np.allclose(dual_functionals(basis, one), 1.0, atol=1e-12)


def test_single_functional():
    P = build_dyadic(WINDOW, 2, 3)
    basis, c, S = random_spline(P, 1, seed=7)
    assert deboor_fix(basis, SupportIndex(1, 4), S) == pytest.approx(c[4], abs=1e-10)
    with pytest.raises(DomainError):
        deboor_fix(basis, SupportIndex(2, 4), S)
    with pytest.raises(DomainError):
        deboor_fix(basis, SupportIndex(1, basis.size), S)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_quasi_interpolant_recovers_coefficients(k):
    P = build_dyadic(WINDOW, 2, k)
    basis, c, S = random_spline(P, 2, seed=k)
    assert np.allclose(quasi_interp_spline(basis, S), c, atol=1e-10)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_quasi_interpolant_reproduces_polynomials_inside(k):
    P = build_dyadic(WINDOW, 1, k)
    basis = BSplineBasis(P, 1)
    polys = [np.polynomial.Polynomial([0.3, -1.0, 0.5, 0.25][:k])] * basis.ncells
    S = PiecewisePoly.from_polynomials(basis.knots, polys)
    T = spline_to_pp(basis, quasi_interp_spline(basis, S))
    x = basis.knots
    pts = np.linspace(x[k - 1], x[basis.ncells - k + 1], 61)[:-1]
    assert np.allclose(T(pts), S(pts), atol=1e-10)


def test_quasi_interpolant_of_step_is_bounded():
    P = build_dyadic(WINDOW, 2, 3)
    basis = BSplineBasis(P, 2)
    x = basis.knots
    values = np.where(x[:-1] < 0.5, 1.0, 0.0)
    S = PiecewisePoly(x, values[None, :])
    c = quasi_interp_spline(basis, S)
    assert np.all(c >= -1e-12) and np.all(c <= 1.0 + 1e-12)


@pytest.mark.parametrize("k", [2, 3])
def test_quasi_interp_reproduces_level_splines(k):
    P = build_dyadic(WINDOW, 3, k)
    basis, c, S = random_spline(P, 2, seed=10 + k)
    f = PiecewiseFunc(S, "S")
    rule = QuadratureRule.from_partition(P).for_function(f)
    for q in (1, 2):
        assert np.allclose(quasi_interp(f, P, 2, q, rule), c, atol=1e-10)


def test_quasi_interp_of_zero():
    P = build_dyadic(WINDOW, 2, 2)
    zero = PiecewiseFunc(PiecewisePoly.zero(Interval(*WINDOW)), "zero")
    rule = QuadratureRule.from_partition(P)
    assert np.all(quasi_interp(zero, P, 1, 2, rule) == 0.0)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_refinement_is_exact(k):
    P = build_dyadic(WINDOW, 2, k)
    coarse, c, S = random_spline(P, 1, seed=3)
    fine = spline_to_pp(BSplineBasis(P, 2), refine_coefficients(P, 2, c))
    x = np.random.default_rng(1).uniform(-1.0, 2.0, 300)
    assert np.allclose(fine(x), S(x), atol=1e-10)


def test_decomposition_counts(small):
    dec = decompose(corpus.bump(), small, 2)
    assert dec.count(0) == 4
    for m in range(1, small.L + 1):
        assert dec.count(m) == 5 * 2 ** m - 1


def test_decomposition_of_base_bspline(small):
    f = PiecewiseFunc(spline_from_terms(small, [(0, 2, 1.0)]), "phi")
    dec = decompose(f, small, 2)
    assert np.allclose(dec.base, [0.0, 0.0, 1.0, 0.0], atol=1e-10)
    for c in dec.details.values():
        assert np.allclose(c, 0.0, atol=1e-10)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_round_trip(k):
    P = build_dyadic(WINDOW, 3, k)
    for seed in range(20):
        _, _, S = random_spline(P, 3, seed)
        dec = decompose(PiecewiseFunc(S, "S"), P, 2)
        assert (reconstruct(dec) - S).sup_norm() <= 1e-9


@pytest.mark.slow
@pytest.mark.parametrize("k", [2, 3, 4])
def test_round_trip_at_depth(k):
    P = build_dyadic(WINDOW, 8, k)
    for seed in range(20):
        _, _, S = random_spline(P, 8, seed)
        dec = decompose(PiecewiseFunc(S, "S"), P, 2)
        assert (reconstruct(dec) - S).sup_norm() <= 1e-9


@pytest.mark.parametrize("fn_id", ["bump", "step", "cusp05"])
def test_insertion_and_direct_paths_agree(small, fn_id):
    f = corpus.resolve(fn_id, small)
    a = decompose(f, small, 2, method="insertion")
    b = decompose(f, small, 2, method="direct")
    assert np.allclose(a.base, b.base)
    for m in a.details:
        assert np.allclose(a.details[m], b.details[m], atol=1e-9)


def test_unknown_method(small):
    with pytest.raises(DomainError):
        decompose(corpus.bump(), small, 2, method="fast")


def test_coefficients_are_local(small):
    extra = lambda x: np.where((x > 1.5) & (x < 2.0), (x - 1.5) ** 2 * (2.0 - x) ** 2, 0.0)
    f = CallableFunc(lambda x: corpus.bump()(x), "f", Interval(0.0, 2.0))
    g = CallableFunc(lambda x: corpus.bump()(x) + extra(x), "g", Interval(0.0, 2.0))
    a, b = decompose(f, small, 2), decompose(g, small, 2)
    near = [j for j in range(len(a.base)) if support_interval(small, SupportIndex(0, j)).hi <= 0.2 + 1e-12]
    assert near
    assert np.allclose(a.base[near], b.base[near], atol=1e-12)
    for m in range(2, small.L + 1):
        idx = [j for j in range(a.count(m)) if support_interval(small, SupportIndex(m, j)).hi <= 0.5 + 1e-12]
        assert np.allclose(a.details[m][idx], b.details[m][idx], atol=1e-12)


def test_spline_from_terms_rejects_unknown_support(small):
    with pytest.raises(DomainError):
        spline_from_terms(small, [(0, 4, 1.0)])
    with pytest.raises(DomainError):
        spline_from_terms(small, [(5, 0, 1.0)])


def test_decomposition_serialization(small):
    dec = decompose(corpus.step(), small, 1)
    back = SplineDecomposition.from_dict(dec.to_dict(), small)
    assert np.array_equal(back.base, dec.base)
    for m in dec.details:
        assert np.array_equal(back.details[m], dec.details[m])
    assert back.name == "step"


def test_decomposition_rejects_bad_index(small):
    data = decompose(corpus.step(), small, 1).to_dict()
    data["details"].append({"m": 2, "j": 19, "coef": 1.0})
    with pytest.raises(DecompositionError, match="outside"):
        SplineDecomposition.from_dict(data, small)


def test_decomposition_rejects_other_partition(small):
    data = decompose(corpus.step(), small, 1).to_dict()
    with pytest.raises(DecompositionError, match="partition"):
        SplineDecomposition.from_dict(data, build_dyadic(WINDOW, 3, 2))


@pytest.mark.parametrize("k", [2, 3, 4])
def test_stable_basis_single_term(k):
    P = build_dyadic(WINDOW, 1, k)
    basis = BSplineBasis(P, 1)
    e = np.zeros(basis.size)
    e[3] = -2.0
    assert stable_basis_check(basis, e, 2, 2).ratio == pytest.approx(1.0, rel=1e-12)
    assert stable_basis_check(basis, e, 1, 1).ratio == pytest.approx(1.0, rel=1e-12)
    ratio = stable_basis_check(basis, e, 2, 1).ratio
    assert 1.0 - 1e-12 <= ratio <= np.sqrt(k) + 1e-12


@pytest.mark.parametrize("k", [2, 3, 4])
def test_stable_basis_random_signs(k):
    P = build_dyadic(WINDOW, 2, k)
    basis = BSplineBasis(P, 2)
    rng = np.random.default_rng(k)
    for _ in range(10):
        c = rng.choice([-1.0, 1.0], basis.size)
        ratio = stable_basis_check(basis, c, 2, 2).ratio
        assert 0.1 <= ratio <= np.sqrt(k) + 1e-9


def test_stable_basis_degenerate():
    P = build_dyadic(WINDOW, 1, 2)
    basis = BSplineBasis(P, 0)
    report = stable_basis_check(basis, np.zeros(basis.size), 2, 1)
    assert report.degenerate
    assert report.cell_side == 0.0 and report.coefficient_side == 0.0
