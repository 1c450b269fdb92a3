# ************************************************************
#  core/nterm.py
# ************************************************************

"""
N-term approximation module.

Greedy selection of the largest decomposition coefficients, sigma_n estimates in
BMO and in the sequence space g^q, and the rate experiments built on them.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import linregress

from core import corpus
from core.bspline import SplineDecomposition, decompose, reconstruct, spline_from_terms
from core.errors import DomainError, StructureError
from core.funcspace import GAUSS_ORDER, Func, PiecewiseFunc, PiecewisePoly, QuadratureRule
from core.norms import CoeffSequence, besov_norm_E, bmo_norm, gq_norm
from core.partition import MultilevelPartition, SupportIndex

logger = logging.getLogger(__name__)

DEFAULT_N_GRID = (4, 8, 16, 32, 64, 128, 256)
ORACLE_MAX_NODES = 20
NORMS = ("bmo", "linf")
# Errors below this are treated as exact zeros when fitting slopes.
ZERO_ERROR = 1e-12
# Largest relative change of the Besov value between L-2 and L still read as converged.
BESOV_DRIFT = 0.5


@dataclass(frozen=True, eq=False)
class NTermApproximant:
    """
    Greedy element of Sigma_n and its residual.

    Attributes:
        selected (Tuple[SupportIndex, ...]): Chosen supports of the best prefix, in selection order.
        coefficients (np.ndarray): Their coefficients.
        spline (PiecewisePoly): sum over the selection of b_Q phi_Q.
        error (float): Residual norm of f - spline, the smallest over all prefixes of length <= n.
        norm (str): 'bmo' or 'linf'.
        exhausted (bool): True when n reached the total coefficient count.
        raw_error (Optional[float]): Residual of all min(n, total) greedy terms.
    """

    selected: Tuple[SupportIndex, ...]
    coefficients: np.ndarray
    spline: PiecewisePoly
    error: float
    norm: str = "bmo"
    exhausted: bool = False
    raw_error: Optional[float] = None

    @property
    def n(self) -> int:
        return len(self.selected)


@dataclass(frozen=True, eq=False)
class RateReport:
    """
    (n, error) table with a fitted log-log slope.

    Attributes:
        fn_id (str): Function or experiment id.
        n (np.ndarray): Strictly increasing n values.
        error (np.ndarray): Nonnegative errors (or ratios for the Bernstein experiment).
        normalized (np.ndarray): error * n^alpha / norm, or nan when not defined.
        slope (float): Least-squares slope of log error against log n.
        intercept (float): Matching intercept.
        slope_defined (bool): False when fewer than two usable points remain.
        alpha (float): Target rate.
        config_hash (str): Hash of the configuration that produced the report.
        extra (Dict): Further scalars recorded by the experiment.
        precondition_failed (bool): The function is not resolved in the Besov space the rate assumes.
    """

    fn_id: str
    n: np.ndarray
    error: np.ndarray
    normalized: np.ndarray
    slope: float
    intercept: float
    slope_defined: bool
    alpha: float
    config_hash: str = ""
    extra: Dict = field(default_factory=dict)
    precondition_failed: bool = False

    def rows(self) -> List[Tuple[int, float, float]]:
        return [(int(n), float(e), float(z)) for n, e, z in zip(self.n, self.error, self.normalized)]

    def to_dict(self) -> Dict:
        return {
            "fn_id": self.fn_id,
            "alpha": self.alpha,
            "slope": self.slope if self.slope_defined else None,
            "intercept": self.intercept if self.slope_defined else None,
            "slope_defined": self.slope_defined,
            "n": [int(n) for n in self.n],
            "error": [None if np.isnan(e) else float(e) for e in self.error],
            "normalized": [None if np.isnan(z) else float(z) for z in self.normalized],
            "config_hash": self.config_hash,
            "precondition_failed": self.precondition_failed,
            **self.extra,
        }


@dataclass(frozen=True)
class CounterexampleReport:
    """Besov values of the smoothed indicator against ln(1/eps)."""

    eps: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    increasing: bool
    config_hash: str = ""

    def to_dict(self) -> Dict:
        return {
            "eps": [float(e) for e in self.eps],
            "values": [float(v) for v in self.values],
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "increasing": self.increasing,
            "config_hash": self.config_hash,
        }


def fit_slope(n: Sequence[float], err: Sequence[float], discard_first: bool = True) -> Tuple[float, float, bool]:
    """
    Least-squares fit of log err against log n.

    Zero errors are dropped; the first point is discarded as pre-asymptotic when asked.

    Returns:
        Tuple[float, float, bool]: (slope, intercept, slope_defined).
    """
    n = np.asarray(n, dtype=float)
    err = np.asarray(err, dtype=float)
    if discard_first:
        n, err = n[1:], err[1:]
    usable = np.isfinite(err) & (err > ZERO_ERROR)
    if np.count_nonzero(usable) < 2:
        logger.warning("Slope undefined: %d usable points", np.count_nonzero(usable))
        return float("nan"), float("nan"), False
    fit = linregress(np.log(n[usable]), np.log(err[usable]))
    return float(fit.slope), float(fit.intercept), True


def greedy_order(dec: SplineDecomposition) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Pooled coefficients sorted by decreasing magnitude, ties by (level, index).

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: (levels, indices, values) in selection order.
    """
    ms, js, vals = dec.flat()
    order = np.lexsort((js, ms, -np.abs(vals)))
    return ms[order], js[order], vals[order]


def _selection(dec: SplineDecomposition, n: int) -> Tuple[Tuple[SupportIndex, ...], np.ndarray, bool]:
    if n < 1:
        raise DomainError(f"n={n} must be >= 1")
    ms, js, vals = greedy_order(dec)
    total = len(vals)
    exhausted = n >= total
    if n > total:
        logger.warning("n=%d exceeds the %d available coefficients; using all of them", n, total)
    take = min(n, total)
    selected = tuple(SupportIndex(int(m), int(j)) for m, j in zip(ms[:take], js[:take]))
    return selected, vals[:take], exhausted


def _keep(dec: SplineDecomposition, selected: Sequence[SupportIndex]) -> Dict[int, np.ndarray]:
    keep = {m: np.zeros(len(c), dtype=bool) for m, c in dec.levels.items()}
    for m, j in selected:
        keep[m][j] = True
    return keep


def _target(dec: SplineDecomposition) -> Func:
    # The decomposed function, or the full reconstruction when the source is gone.
    if dec.source is not None:
        return dec.source
    return PiecewiseFunc(reconstruct(dec), dec.name or "reconstruction")


def _residual(dec: SplineDecomposition, g: PiecewisePoly) -> Func:
    return _target(dec).minus(g, f"{dec.name}-residual")


def sup_distance(
    f: Func, g: PiecewisePoly, partition: MultilevelPartition, rule: Optional[QuadratureRule] = None
) -> float:
    """
    sup |f - g|: exact when f is a piecewise polynomial, else the max over the rule's nodes and breaks.
    """
    if f.exact is not None:
        return (f.exact - g).sup_norm()
    rule = (rule or QuadratureRule.from_partition(partition, GAUSS_ORDER)).for_function(f)
    x = np.concatenate([rule.nodes.ravel(), rule.breaks])
    return float(np.max(np.abs(f.evaluate(x) - g(x))))


def _residual_norm(
    dec: SplineDecomposition, g: PiecewisePoly, norm: str, bmo_q: Optional[float], rule: Optional[QuadratureRule]
) -> float:
    if norm == "bmo":
        return bmo_norm(_residual(dec, g), dec.partition, bmo_q or dec.q, rule).value
    return sup_distance(_target(dec), g, dec.partition, rule)


def prefix_errors(
    dec: SplineDecomposition,
    count: int,
    norm: str = "bmo",
    bmo_q: Optional[float] = None,
    rule: Optional[QuadratureRule] = None,
) -> np.ndarray:
    """
    Raw residual norms of the greedy prefixes of length 1..count.

    The entries need not decrease: dropping a coefficient of the quasi-interpolant
    telescope can leave a larger residual than a shorter prefix did.

    Args:
        dec (SplineDecomposition): Decomposition of f.
        count (int): Longest prefix; capped at the coefficient count.
        norm (str): 'bmo' or 'linf'.
        bmo_q (Optional[float]): Exponent of the BMO estimator; defaults to the decomposition's q.
        rule (Optional[QuadratureRule]): Base rule for the residual norm.

    Returns:
        np.ndarray: Entry i is the residual of the first i + 1 terms.
    """
    if norm not in NORMS:
        raise DomainError(f"unknown norm {norm!r}, expected one of {NORMS}")
    ms, js, _ = greedy_order(dec)
    keep = _keep(dec, ())
    raw = np.empty(min(int(count), len(ms)))
    for i in range(len(raw)):
        keep[int(ms[i])][int(js[i])] = True
        raw[i] = _residual_norm(dec, reconstruct(dec, keep), norm, bmo_q, rule)
        logger.debug("Prefix %d of %s (%s): %.6g", i + 1, dec.name, norm, raw[i])
    return raw


def _best_prefix(
    dec: SplineDecomposition, n: int, norm: str, bmo_q: Optional[float], rule: Optional[QuadratureRule]
) -> NTermApproximant:
    selected, coefs, exhausted = _selection(dec, n)
    raw = prefix_errors(dec, len(selected), norm, bmo_q, rule)
    best = int(np.argmin(raw)) + 1
    g = reconstruct(dec, _keep(dec, selected[:best]))
    logger.debug("Greedy %d-term %s error of %s: %.6g (best prefix %d)", n, norm, dec.name, raw[best - 1], best)
    return NTermApproximant(selected[:best], coefs[:best], g, float(raw[best - 1]), norm, exhausted, float(raw[-1]))


def greedy_nterm(
    dec: SplineDecomposition,
    n: int,
    tau: float,
    bmo_q: Optional[float] = None,
    rule: Optional[QuadratureRule] = None,
) -> NTermApproximant:
    """
    Best greedy prefix of at most n terms, residual measured in BMO.

    The greedy selections for 1..n are nested, so every prefix lies in Sigma_n and the
    smallest prefix residual is an upper bound for sigma_n that never grows with n.

    Args:
        dec (SplineDecomposition): Decomposition of f.
        n (int): Number of terms, >= 1.
        tau (float): Summability exponent 1/alpha, > 0.
        bmo_q (Optional[float]): Exponent of the BMO estimator; defaults to the decomposition's q.
        rule (Optional[QuadratureRule]): Base rule for the BMO estimate.

    Returns:
        NTermApproximant: Flagged exhausted when n reaches the coefficient count.
    """
    if not tau > 0:
        raise DomainError(f"tau={tau} must be > 0")
    return _best_prefix(dec, n, "bmo", bmo_q, rule)


def linf_nterm(dec: SplineDecomposition, n: int, rule: Optional[QuadratureRule] = None) -> NTermApproximant:
    """
    Same greedy prefixes, residual measured in the sup norm on the quadrature grid.
    """
    return _best_prefix(dec, n, "linf", None, rule)


def approximation_curve(
    dec: SplineDecomposition,
    n_grid: Sequence[int],
    norm: str = "bmo",
    bmo_q: Optional[float] = None,
    rule: Optional[QuadratureRule] = None,
    raw: bool = False,
) -> np.ndarray:
    """
    Greedy errors for every n of a grid, one sort and one prefix sweep shared by all n.

    Each entry is the smallest residual over the prefixes of length <= n, so the curve
    never increases along an increasing grid.

    Args:
        raw (bool): Return the residual of exactly min(n, total) terms instead.

    Returns:
        np.ndarray: One error per grid entry.
    """
    grid = [int(n) for n in n_grid]
    if any(n < 1 for n in grid):
        raise DomainError(f"n_grid entries must be >= 1, got {grid}")
    if not grid:
        return np.array([])
    errors = prefix_errors(dec, max(grid), norm, bmo_q, rule)
    if not raw:
        errors = np.minimum.accumulate(errors)
    return np.array([errors[min(n, len(errors)) - 1] for n in grid])


def _check_grid(n_grid: Sequence[int]) -> np.ndarray:
    grid = np.asarray(n_grid, dtype=int)
    if grid.ndim != 1 or len(grid) == 0 or np.any(grid < 1) or np.any(np.diff(grid) <= 0):
        raise DomainError(f"n_grid must be strictly increasing positive integers, got {list(n_grid)}")
    return grid


def sigma_n_gq_greedy(h: CoeffSequence, n: int, q: float) -> Tuple[np.ndarray, float]:
    """
    Zero the n largest |h_xi| (ties by node order) and return the residual g^q norm.

    Returns:
        Tuple[np.ndarray, float]: (selected node indices, residual norm).
    """
    if n < 0:
        raise DomainError(f"n={n} must be >= 0")
    a = np.abs(h.values)
    order = np.lexsort((np.arange(len(a)), -a))
    chosen = np.sort(order[: min(n, len(a))])
    rest = h.values.copy()
    rest[chosen] = 0.0
    return chosen, gq_norm(h.with_values(rest), q)


def sigma_n_gq_oracle(h: CoeffSequence, n: int, q: float) -> float:
    """
    Exact sigma_n in g^q by enumerating every kept set of size min(n, size).

    Raises:
        StructureError: If the structure has more than 20 nodes.
    """
    s = h.structure
    if s.size > ORACLE_MAX_NODES:
        raise StructureError(f"oracle needs at most {ORACLE_MAX_NODES} nodes, structure has {s.size}")
    if n < 0:
        raise DomainError(f"n={n} must be >= 0")
    size = s.size
    keep = min(n, size)
    if keep == size:
        return 0.0
    a = np.abs(h.values)
    if np.isinf(q):
        return float(min(np.max(np.delete(a, c)) if len(c) < size else 0.0 for c in combinations(range(size), keep)))
    # Ancestor matrix: A[xi, eta] = 1 when eta lies in the subtree of xi.
    A = np.eye(size)
    for i in np.argsort(-s.level, kind="stable"):
        p = s.parent[i]
        if p >= 0:
            A[p] += A[i]
    A = (A > 0).astype(float)
    w = a ** q * s.lengths
    sets = np.array(list(combinations(range(size), keep)), dtype=int).reshape(-1, keep)
    W = np.broadcast_to(w, (len(sets), size)).copy()
    np.put_along_axis(W, sets, 0.0, axis=1)
    values = np.max((W @ A.T) / s.lengths, axis=1) ** (1.0 / q)
    return float(np.min(values))


def _normalized(err: np.ndarray, grid: np.ndarray, alpha: float, norm: float) -> np.ndarray:
    if norm <= 0:
        return np.full(len(err), np.nan)
    return err * grid.astype(float) ** alpha / norm


def besov_unstable(fine: float, coarse: float) -> bool:
    """True when the Besov value moves by more than half between two refinements."""
    if max(fine, coarse) <= ZERO_ERROR:
        return False
    if coarse <= 0:
        return True
    return abs(fine / coarse - 1.0) > BESOV_DRIFT


def jackson_rate_experiment(
    f: Func,
    partition: MultilevelPartition,
    alpha: float,
    k: int,
    q: float,
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    config_hash: str = "",
    bmo_q: Optional[float] = None,
    rule: Optional[QuadratureRule] = None,
) -> RateReport:
    """
    Greedy BMO errors of f over n_grid, the fitted rate, and error * n^alpha / ||f||_{B(E,q)}.

    The Besov norm is also computed two levels coarser. When the two values differ by more
    than half, f is not resolved as a member of the Besov space at this depth and the report
    is flagged precondition_failed; its normalized errors are then not evidence of a rate.

    Raises:
        DomainError: If the Besov norm is not finite.
    """
    grid = _check_grid(n_grid)
    rule = (rule or QuadratureRule.from_partition(partition, GAUSS_ORDER)).for_function(f)
    besov = besov_norm_E(f, partition, alpha, k, q, rule).value
    if not np.isfinite(besov):
        raise DomainError(f"Besov norm of {f.name} is not finite")
    extra = {"besov_E": besov}
    failed = False
    if partition.L >= 2:
        coarse = partition.truncated(partition.L - 2)
        coarse_besov = besov_norm_E(f, coarse, alpha, k, q).value
        extra["besov_E_coarse"] = coarse_besov
        failed = besov_unstable(besov, coarse_besov)
        if failed:
            logger.warning("Besov norm of %s not stable under refinement: %.4g vs %.4g", f.name, besov, coarse_besov)
    dec = decompose(f, partition, q, rule)
    raw = prefix_errors(dec, int(grid[-1]), "bmo", bmo_q, rule)
    at = np.minimum(grid, len(raw)) - 1
    err = np.minimum.accumulate(raw)[at]
    extra["raw_error"] = [float(e) for e in raw[at]]
    slope, intercept, defined = fit_slope(grid, err)
    logger.info("Jackson experiment %s: slope %.4g (alpha=%g)", f.name, slope, alpha)
    return RateReport(
        f.name,
        grid,
        err,
        _normalized(err, grid, alpha, besov),
        slope,
        intercept,
        defined,
        alpha,
        config_hash,
        extra,
        precondition_failed=failed,
    )


def compare_bmo_linf(
    dec: SplineDecomposition,
    n_grid: Sequence[int],
    alpha: float,
    config_hash: str = "",
    bmo_q: Optional[float] = None,
) -> Tuple[RateReport, RateReport]:
    """
    BMO and sup-norm greedy errors on the same grid, each with its fitted slope.
    """
    grid = _check_grid(n_grid)
    nan = np.full(len(grid), np.nan)
    reports = []
    for norm in NORMS:
        err = approximation_curve(dec, grid, norm, bmo_q)
        slope, intercept, defined = fit_slope(grid, err)
        reports.append(
            RateReport(f"{dec.name}:{norm}", grid, err, nan, slope, intercept, defined, alpha, config_hash)
        )
    return reports[0], reports[1]


def _bernstein_ratio(
    partition: MultilevelPartition,
    spline_partition: MultilevelPartition,
    terms: List[Tuple[int, int, float]],
    n: int,
    alpha: float,
    k: int,
    q: float,
    bmo_q: float,
) -> float:
    g = PiecewiseFunc(spline_from_terms(spline_partition, terms), f"random-{n}-term")
    bmo = bmo_norm(g, partition, bmo_q).value
    if bmo <= ZERO_ERROR:
        return float("nan")
    return besov_norm_E(g, partition, alpha, k, q).value / (n ** alpha * bmo)


def bernstein_experiment(
    partition: MultilevelPartition,
    alpha: float,
    k: int,
    trials: int,
    n_grid: Sequence[int],
    seed: int,
    q: float = 1.0,
    bmo_q: float = 1.0,
    bspline_order: Optional[int] = None,
    n_jobs: int = 1,
    config_hash: str = "",
) -> RateReport:
    """
    Max over random g in Sigma_n of ||g||_{B(E,q)} / (n^alpha ||g||_BMO), for every n of a grid.

    Supports are drawn uniformly without replacement across all levels and coefficients are
    standard normal. All draws happen up front, so the report does not depend on n_jobs.

    Args:
        bspline_order (Optional[int]): Draw g from B-splines of this order instead of k
            (2 gives merely continuous g).
    """
    if trials < 1:
        raise DomainError(f"trials={trials} must be >= 1")
    grid = _check_grid(n_grid)
    spline_partition = partition
    if bspline_order is not None and bspline_order != partition.k:
        spline_partition = MultilevelPartition(partition.window, partition.levels, bspline_order, partition.lam, partition.m0)
    sizes = [spline_partition.ncells(m) - spline_partition.k + 1 for m in range(spline_partition.L + 1)]
    labels = np.array([(m, j) for m, s in enumerate(sizes) for j in range(s)])
    if grid[-1] > len(labels):
        raise DomainError(f"n={grid[-1]} exceeds the {len(labels)} available supports")
    rng = np.random.default_rng(int(seed) % 2 ** 64)
    tasks = []
    for n in grid:
        for _ in range(trials):
            pick = labels[rng.choice(len(labels), size=int(n), replace=False)]
            coefs = rng.standard_normal(int(n))
            tasks.append((int(n), [(int(m), int(j), float(c)) for (m, j), c in zip(pick, coefs)]))
    ratios = Parallel(n_jobs=n_jobs)(
        delayed(_bernstein_ratio)(partition, spline_partition, terms, n, alpha, k, q, bmo_q) for n, terms in tasks
    )
    ratios = np.array(ratios).reshape(len(grid), trials)
    worst = np.array([np.nanmax(r) if np.any(np.isfinite(r)) else np.nan for r in ratios])
    slope, intercept, defined = fit_slope(grid, worst, discard_first=False)
    name = "bernstein" if spline_partition is partition else f"bernstein-order{spline_partition.k}"
    logger.info("Bernstein experiment: slope %.4g over %d trials", slope, trials)
    return RateReport(
        name, grid, worst, np.full(len(grid), np.nan), slope, intercept, defined, alpha, config_hash,
        {"trials": trials, "seed": int(seed)},
    )


def counterexample_growth(
    partition: MultilevelPartition,
    eps_grid: Sequence[float],
    alpha: float = 1.0,
    k: int = 2,
    q: float = 1.0,
    config_hash: str = "",
) -> CounterexampleReport:
    """
    Besov value ||S_eps||_{B(E,q)}^tau of the smoothed indicator, fitted against ln(1/eps).

    Raises:
        DomainError: If alpha != 1, k != 2, or some eps is below the finest cell length.
    """
    if alpha != 1.0 or k != 2:
        raise DomainError(f"the counterexample is defined for alpha=1 and k=2, got alpha={alpha}, k={k}")
    eps = np.asarray(eps_grid, dtype=float)
    finest = float(np.min(partition.lengths(partition.L)))
    if len(eps) < 2 or np.any(eps < finest * (1.0 - 1e-9)):
        raise DomainError(f"eps values must number at least two and be >= the finest cell length {finest:.4g}")
    tau = 1.0 / alpha
    values = []
    for e in eps:
        S = corpus.smoothstep(float(e))
        values.append(besov_norm_E(S, partition, alpha, k, q).value ** tau)
        logger.debug("Counterexample eps=%g: %.6g", e, values[-1])
    values = np.array(values)
    fit = linregress(np.log(1.0 / eps), values)
    order = np.argsort(-eps)
    increasing = bool(np.all(np.diff(values[order]) > 0))
    return CounterexampleReport(
        eps, values, float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), increasing, config_hash
    )
