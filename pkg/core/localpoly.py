# ************************************************************
#  core/localpoly.py
# ************************************************************

"""
Local polynomial approximation module.

Errors E_k, moduli of smoothness, the near-best linear projector onto
polynomials of degree k-1, and the piecewise projector over a partition level.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import Legendre
from numpy.polynomial.legendre import legder, leggauss, legval, legvander
from scipy.optimize import minimize, minimize_scalar
from scipy.special import comb

from core.config import load_constants
from core.errors import DomainError
from core.funcspace import Func, PiecewisePoly, QuadratureRule, gauss_nodes, merge_breakpoints
from core.partition import Interval, MultilevelPartition

logger = logging.getLogger(__name__)

# Near-best constant A of the L2 projector, measured against best_poly_error_oracle and frozen.
NEAR_BEST_BOUND = float(load_constants()["near_best_A"])
MODULUS_SAMPLES = 64
IRLS_ITERATIONS = 50
IRLS_TOL = 1e-6


@dataclass(frozen=True)
class PolyApprox:
    """
    Near-best polynomial approximation of f on an interval.

    Attributes:
        interval (Interval): J.
        k (int): Order; poly has degree <= k - 1.
        q (float): Norm exponent the error is measured in.
        poly (Legendre): The polynomial, with domain J.
        err (float): Achieved L^q(J) error.
        near_best_constant (float): Constant A bounding err / E_k(f, J)_q.
    """

    interval: Interval
    k: int
    q: float
    poly: Legendre
    err: float
    near_best_constant: float = NEAR_BEST_BOUND


@dataclass(frozen=True)
class OracleResult:
    """Best L^q polynomial error found by the minimization oracle."""

    value: float
    converged: bool
    iterations: int
    poly: Optional[Legendre] = None


def _check(J: Interval, k: int, q: float) -> Interval:
    J = Interval(float(J[0]), float(J[1]))
    if k < 1:
        raise DomainError(f"order k={k} must be >= 1")
    if q < 1:
        raise DomainError(f"q={q} must be >= 1")
    if J.length <= 0:
        raise DomainError(f"interval {tuple(J)} is degenerate")
    return J


def legendre_coefficients(x: np.ndarray, w: np.ndarray, fx: np.ndarray, J: Interval, k: int) -> np.ndarray:
    """
    L2(J)-orthogonal projection onto polynomials of degree < k, as Legendre coefficients on J.

    Args:
        x (np.ndarray): Quadrature nodes in J.
        w (np.ndarray): Matching weights.
        fx (np.ndarray): Function values at the nodes, shape (n,) or (n, batch).
        J (Interval): Interval the Legendre basis is mapped to.
        k (int): Order.

    Returns:
        np.ndarray: Coefficients, shape (k,) or (k, batch).
    """
    t = (2.0 * x - (J.lo + J.hi)) / J.length
    V = legvander(t, k - 1)
    scale = (2.0 * np.arange(k) + 1.0) / J.length
    if fx.ndim == 1:
        return scale * (V.T @ (w * fx))
    return scale[:, None] * (V.T @ (w[:, None] * fx))


def lq_from_samples(w: np.ndarray, r: np.ndarray, q: float) -> float:
    a = np.abs(r)
    if np.isinf(q):
        return float(np.max(a)) if a.size else 0.0
    return float(np.sum(w * a ** q) ** (1.0 / q))


def projection_error(
    x: np.ndarray, w: np.ndarray, fx: np.ndarray, J: Interval, k: int, q: float
) -> float:
    """L^q(J) error of the L2 projection, from samples."""
    c = legendre_coefficients(x, w, fx, J, k)
    t = (2.0 * x - (J.lo + J.hi)) / J.length
    return lq_from_samples(w, fx - legvander(t, k - 1) @ c, q)


def near_best_poly(f: Func, J: Interval, k: int, q: float, rule: QuadratureRule) -> PolyApprox:
    """
    Near-best polynomial approximation by L2(J)-orthogonal projection.

    The same linear projector serves every q >= 1.

    Args:
        f (Func): Function to approximate.
        J (Interval): Interval of approximation.
        k (int): Order.
        q (float): Exponent of the reported error.
        rule (QuadratureRule): Composite Gauss rule.

    Returns:
        PolyApprox: Projection and its L^q(J) error.
    """
    J = _check(J, k, q)
    x, w = rule.nodes_on(J, f.breakpoints)
    fx = f.evaluate(x)
    c = legendre_coefficients(x, w, fx, J, k)
    poly = Legendre(c, domain=[J.lo, J.hi])
    return PolyApprox(J, k, q, poly, lq_from_samples(w, fx - poly(x), q))


def best_poly_error_oracle(
    f: Func,
    J: Interval,
    k: int,
    q: float,
    rule: QuadratureRule,
    iterations: int = IRLS_ITERATIONS,
    tol: float = IRLS_TOL,
) -> OracleResult:
    """
    Numerically minimize ||f - P||_{L^q(J)} over polynomials of degree < k.

    q = 2 is solved exactly by projection. Otherwise iteratively reweighted least squares
    starts from the L2 solution; if it fails to settle it restarts from the L2 solution with
    damped updates. The best iterate is polished with a derivative-free search.

    Returns:
        OracleResult: Achieved error (an upper bound for E_k) and a convergence flag.
    """
    J = _check(J, k, q)
    x, w = rule.nodes_on(J, f.breakpoints)
    fx = f.evaluate(x)
    t = (2.0 * x - (J.lo + J.hi)) / J.length
    V = legvander(t, k - 1)
    c0 = legendre_coefficients(x, w, fx, J, k)
    err0 = lq_from_samples(w, fx - V @ c0, q)
    if q == 2 or err0 == 0.0:
        return OracleResult(err0, True, 0, Legendre(c0, domain=[J.lo, J.hi]))

    floor = 1e-12 * (np.max(np.abs(fx)) + 1.0)
    best_c, best_err = c0, err0
    used = 0
    converged = False
    for damping in (1.0, 0.5):
        c, prev = c0.copy(), err0
        for _ in range(iterations):
            r = fx - V @ c
            omega = w * np.maximum(np.abs(r), floor) ** (q - 2.0)
            sw = np.sqrt(omega)
            c_new = np.linalg.lstsq(V * sw[:, None], fx * sw, rcond=None)[0]
            c = damping * c_new + (1.0 - damping) * c
            err = lq_from_samples(w, fx - V @ c, q)
            used += 1
            if err < best_err:
                best_c, best_err = c, err
            if abs(prev - err) <= tol * max(err, floor):
                converged = True
                break
            prev = err
        if converged:
            break
        logger.debug("IRLS did not settle on %s (q=%g); restarting with damping", tuple(J), q)

    res = minimize(
        lambda c: lq_from_samples(w, fx - V @ c, q),
        best_c,
        method="Powell",
        options={"xtol": 1e-10, "ftol": 1e-12, "maxiter": 2000},
    )
    if res.fun < best_err:
        best_c, best_err = res.x, float(res.fun)
    if not converged:
        logger.warning("Best-approximation oracle did not converge on %s (q=%g)", tuple(J), q)
    return OracleResult(best_err, converged, used, Legendre(best_c, domain=[J.lo, J.hi]))


def _difference_norm(f: Func, J: Interval, k: int, q: float, h: float, rule: QuadratureRule) -> float:
    # ||Delta_h^k(f, ., J)||_{L^q(J)}; the difference vanishes unless [x, x + kh] lies in J.
    lo, hi = J.lo, J.hi - k * h
    if hi <= lo:
        return 0.0
    pieces = [[lo, hi], rule.breaks[(rule.breaks > lo) & (rule.breaks < hi)]]
    fb = f.breakpoints
    for j in range(k + 1):
        s = fb - j * h
        pieces.append(s[(s > lo) & (s < hi)])
    x, w = gauss_nodes(merge_breakpoints(*pieces), rule.order)
    delta = np.zeros_like(x)
    for j in range(k + 1):
        delta += (-1.0) ** (k + j) * comb(k, j) * f.evaluate(x + j * h)
    return lq_from_samples(w, delta, q)


def difference_norms(
    f: Func, J: Interval, k: int, q: float, rule: QuadratureRule, hs: np.ndarray
) -> np.ndarray:
    """||Delta_h^k f||_{L^q(J)} for every step in hs."""
    return np.array([_difference_norm(f, J, k, q, float(h), rule) for h in hs])


def modulus(
    f: Func,
    J: Interval,
    k: int,
    q: float,
    rule: QuadratureRule,
    h_samples: int = MODULUS_SAMPLES,
) -> float:
    """
    k-th modulus of smoothness of f on J in L^q, sampled.

    Evaluates the k-th difference norm on h_samples geometric steps in (0, |J|/k], then
    refines around the best one with a bounded scalar search. The result is the largest
    value seen, a lower bound of the true supremum.
    """
    J = _check(J, k, q)
    if h_samples < 16:
        raise DomainError(f"h_samples={h_samples} must be >= 16")
    hmax = J.length / k
    hs = hmax * np.geomspace(1.0 / h_samples, 1.0, h_samples)
    values = difference_norms(f, J, k, q, rule, hs)
    i = int(np.argmax(values))
    best = float(values[i])
    a, b = hs[max(i - 1, 0)], hs[min(i + 1, len(hs) - 1)]
    if b > a:
        res = minimize_scalar(
            lambda h: -_difference_norm(f, J, k, q, h, rule),
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-6 * hmax},
        )
        best = max(best, -float(res.fun))
    return best


def averaged_modulus(
    f: Func, J: Interval, k: int, q: float, rule: QuadratureRule, samples: int = 32
) -> float:
    """
    Averaged form ((1/|J|) int_0^{|J|} ||Delta_h^k(f, ., J)||_q^q dh)^{1/q}.
    """
    J = _check(J, k, q)
    if np.isinf(q):
        raise DomainError("the averaged modulus needs finite q")
    t, wt = leggauss(samples)
    hmax = J.length / k
    hs = 0.5 * hmax * (t + 1.0)
    d = difference_norms(f, J, k, q, rule, hs)
    return float((np.sum(0.5 * hmax * wt * d ** q) / J.length) ** (1.0 / q))


def level_projection(
    f: Func, partition: MultilevelPartition, m: int, k: int, rule: QuadratureRule
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Legendre coefficients of the L2 projection on every level-m cell.

    Args:
        rule (QuadratureRule): Rule whose breaks contain the level-m knots.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Coefficients of shape (ncells, k) and the level-m knots.
    """
    knots = partition.knots(m)
    rule.cell_index(knots)
    n = len(knots) - 1
    centers = 0.5 * (rule.breaks[:-1] + rule.breaks[1:])
    owner = np.repeat(np.searchsorted(knots, centers, side="right") - 1, rule.order)
    x = rule.nodes.ravel()
    wv = rule.weights.ravel() * rule.sample(f).ravel()
    lo, hi = knots[owner], knots[owner + 1]
    V = legvander((2.0 * x - (lo + hi)) / (hi - lo), k - 1)
    h = np.diff(knots)
    coefs = np.empty((n, k))
    for d in range(k):
        coefs[:, d] = (2.0 * d + 1.0) / h * np.bincount(owner, weights=wv * V[:, d], minlength=n)
    return coefs, knots


def legendre_cells_to_pp(coefs: np.ndarray, knots: np.ndarray) -> PiecewisePoly:
    """Convert per-cell Legendre coefficients into the local power basis of a PiecewisePoly."""
    n, k = coefs.shape
    h = np.diff(knots)
    c = np.zeros((k, n))
    for d in range(k):
        # d-th derivative at the left knot, where the mapped variable is -1.
        der = legder(coefs, d, axis=1) if d else coefs
        c[k - 1 - d] = legval(-1.0, der.T) * (2.0 / h) ** d / math.factorial(d)
    return PiecewisePoly(knots, c)


def piecewise_projector(
    f: Func, partition: MultilevelPartition, m: int, q: float, rule: QuadratureRule
) -> PiecewisePoly:
    """
    Level-m piecewise polynomial whose piece on every cell is the near-best polynomial.

    Args:
        f (Func): Function to project.
        partition (MultilevelPartition): Partition supplying the cells and the order k.
        m (int): Level.
        q (float): Exponent; the projector is the same linear map for every q.
        rule (QuadratureRule): Rule whose breaks contain the level-m knots.

    Returns:
        PiecewisePoly: Possibly discontinuous, right-continuous at the knots.
    """
    if q < 1:
        raise DomainError(f"q={q} must be >= 1")
    coefs, knots = level_projection(f, partition, m, partition.k, rule)
    logger.debug("Projected %s on level %d (%d cells)", f.name, m, len(knots) - 1)
    return legendre_cells_to_pp(coefs, knots)


def projection_errors(
    f: Func, lo: np.ndarray, hi: np.ndarray, k: int, q: float, rule: QuadratureRule
) -> np.ndarray:
    """
    L^q error of the near-best polynomial on every interval of a family, in one pass.

    The intervals may overlap; their endpoints must be boundaries of the rule.

    Args:
        f (Func): Function to approximate.
        lo (np.ndarray): Left endpoints.
        hi (np.ndarray): Right endpoints.
        k (int): Order.
        q (float): Exponent, >= 1 or inf.
        rule (QuadratureRule): Rule whose breaks contain every endpoint.

    Returns:
        np.ndarray: One error per interval.
    """
    if q < 1:
        raise DomainError(f"q={q} must be >= 1")
    a, b = rule.cell_index(lo), rule.cell_index(hi)
    counts = b - a
    n = len(a)
    total = int(counts.sum())
    owner = np.repeat(np.arange(n), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    cells = np.repeat(a, counts) + np.arange(total) - starts
    fx = rule.sample(f)[cells].ravel()
    x = rule.nodes[cells].ravel()
    w = rule.weights[cells].ravel()
    owner = np.repeat(owner, rule.order)
    left, right = np.asarray(lo, dtype=float)[owner], np.asarray(hi, dtype=float)[owner]
    V = legvander((2.0 * x - (left + right)) / (right - left), k - 1)
    length = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
    resid = fx.copy()
    for d in range(k):
        c = (2.0 * d + 1.0) / length * np.bincount(owner, weights=w * fx * V[:, d], minlength=n)
        resid -= c[owner] * V[:, d]
    if np.isinf(q):
        out = np.zeros(n)
        np.maximum.at(out, owner, np.abs(resid))
        return out
    return np.bincount(owner, weights=w * np.abs(resid) ** q, minlength=n) ** (1.0 / q)
