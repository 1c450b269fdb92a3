# ************************************************************
#  core/bspline.py
# ************************************************************

"""
B-spline module.

Normalized B-spline bases over the levels of a multilevel partition, the
de Boor-Fix dual functionals, the quasi-interpolants T_m and T_{m,q}, knot
insertion between levels, and the multilevel decomposition into level details.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy.interpolate import BSpline, PPoly
from scipy.sparse import csr_matrix

from core.errors import DecompositionError, DomainError
from core.funcspace import GAUSS_ORDER, Func, PiecewisePoly, QuadratureRule, gauss_nodes
from core.localpoly import piecewise_projector
from core.partition import TOL, Interval, MultilevelPartition, SupportIndex

logger = logging.getLogger(__name__)

METHODS = ("insertion", "direct")


class BSplineBasis:
    """
    Normalized B-splines phi_Q of one partition level.

    Every support Q = [x_{m,j}, x_{m,j+k}] gets a fixed evaluation cell inside Q and the
    point xi_Q at its midpoint. The level knots are padded with k - 1 auxiliary knots on
    each side so the whole level is a single scipy spline.
    """

    def __init__(self, partition: MultilevelPartition, m: int) -> None:
        self.partition = partition
        self.m = m
        self.k = partition.k
        self.knots = partition.knots(m)
        self.ncells = len(self.knots) - 1
        self.size = self.ncells - self.k + 1
        self.eval_cells = np.arange(self.size) + self.k // 2
        self.xi = 0.5 * (self.knots[self.eval_cells] + self.knots[self.eval_cells + 1])

    @property
    def degree(self) -> int:
        return self.k - 1

    @property
    def padded_knots(self) -> np.ndarray:
        x, p = self.knots, self.k - 1
        left = x[0] - (x[1] - x[0]) * np.arange(p, 0, -1)
        right = x[-1] + (x[-1] - x[-2]) * np.arange(1, p + 1)
        return np.concatenate([left, x, right])

    def knots_of(self, Q: SupportIndex) -> np.ndarray:
        self._check(Q)
        return self.knots[Q.j : Q.j + self.k + 1]

    def support(self, Q: SupportIndex) -> Interval:
        t = self.knots_of(Q)
        return Interval(t[0], t[-1])

    def padded_coefficients(self, coefficients: np.ndarray) -> np.ndarray:
        c = np.asarray(coefficients, dtype=float)
        if c.shape != (self.size,):
            raise DecompositionError(f"level {self.m} needs {self.size} coefficients, got {c.shape}")
        pad = np.zeros(self.k - 1)
        return np.concatenate([pad, c, pad])

    def design_matrix(self, x: np.ndarray) -> csr_matrix:
        """
        Values of every phi_Q at the points x, as a sparse (len(x), size) matrix.
        """
        x = np.asarray(x, dtype=float)
        D = BSpline.design_matrix(x, self.padded_knots, self.degree).tocsc()
        return D[:, self.k - 1 : self.k - 1 + self.size].tocsr()

    def _check(self, Q: SupportIndex) -> None:
        if Q.m != self.m or not 0 <= Q.j < self.size:
            raise DomainError(f"support {tuple(Q)} is not a level-{self.m} support")


def eval_bspline(basis: BSplineBasis, Q: SupportIndex, x, nu: int = 0) -> np.ndarray:
    """
    Value (or nu-th derivative) of the normalized B-spline phi_Q.

    Args:
        basis (BSplineBasis): Level basis.
        Q (SupportIndex): Support of the B-spline.
        x: Evaluation points.
        nu (int): Derivative order, at most k - 1.

    Returns:
        np.ndarray: Zero outside [x_{m,j}, x_{m,j+k}).
    """
    b = BSpline.basis_element(basis.knots_of(Q), extrapolate=False)
    return np.nan_to_num(b(np.asarray(x, dtype=float), nu), nan=0.0)


def _elementary_symmetric(d: np.ndarray) -> np.ndarray:
    # Row-wise e_0..e_r of the r columns of d.
    rows, r = d.shape
    e = np.zeros((rows, r + 1))
    e[:, 0] = 1.0
    for i in range(r):
        e[:, 1 : i + 2] = e[:, 1 : i + 2] + d[:, i : i + 1] * e[:, : i + 1]
    return e


def dual_functionals(basis: BSplineBasis, S: PiecewisePoly) -> np.ndarray:
    """
    de Boor-Fix functionals a_Q(S) for every support of the level.

    a_Q(S) = sum_nu (-1)^nu w_Q^{(k-nu-1)}(xi_Q) S^{(nu)}(xi_Q), with
    w_Q(x) = prod_{i=j+1}^{j+k-1} (x - x_{m,i}) / (k-1)!. Derivatives of S come from the
    piece containing xi_Q.

    Raises:
        DecompositionError: If some xi_Q is a breakpoint of S.
    """
    k = basis.k
    xi = basis.xi
    br = S.breakpoints
    pos = np.searchsorted(br, xi)
    tol = TOL * (basis.knots[-1] - basis.knots[0])
    gap = np.minimum(
        np.abs(br[np.minimum(pos, len(br) - 1)] - xi), np.abs(br[np.maximum(pos - 1, 0)] - xi)
    )
    near = gap <= tol
    if np.any(near):
        raise DecompositionError(f"evaluation point {xi[np.argmax(near)]:g} is a breakpoint of S")
    j = np.arange(basis.size)
    interior = basis.knots[j[:, None] + np.arange(1, k)[None, :]]
    e = _elementary_symmetric(xi[:, None] - interior)
    derivs = S.derivatives_at(xi, k)
    a = np.zeros(basis.size)
    for nu in range(k):
        weight = (-1.0) ** nu * math.factorial(k - 1 - nu) / math.factorial(k - 1)
        a += weight * e[:, nu] * derivs[nu]
    return a


def deboor_fix(basis: BSplineBasis, Q: SupportIndex, S: PiecewisePoly) -> float:
    """Single de Boor-Fix coefficient a_Q(S)."""
    basis._check(Q)
    return float(dual_functionals(basis, S)[Q.j])


def quasi_interp_spline(basis: BSplineBasis, S: PiecewisePoly) -> np.ndarray:
    """
    Coefficients of T_m(S) = sum_Q a_Q(S) phi_Q; reproduces every level-m spline.
    """
    return dual_functionals(basis, S)


def quasi_interp(
    f: Func, partition: MultilevelPartition, m: int, q: float, rule: QuadratureRule
) -> np.ndarray:
    """
    Coefficients of T_{m,q}(f) = T_m(P_{m,q}(f)).

    Args:
        f (Func): Function to approximate.
        partition (MultilevelPartition): Partition.
        m (int): Level.
        q (float): Exponent of the near-best projector.
        rule (QuadratureRule): Rule whose breaks contain the finest knots.

    Returns:
        np.ndarray: One coefficient per level-m support.
    """
    return quasi_interp_spline(BSplineBasis(partition, m), piecewise_projector(f, partition, m, q, rule))


def spline_to_pp(basis: BSplineBasis, coefficients: np.ndarray) -> PiecewisePoly:
    """Exact piecewise-polynomial form of sum_Q c_Q phi_Q over the level-m knots."""
    spl = BSpline(basis.padded_knots, basis.padded_coefficients(coefficients), basis.degree, extrapolate=False)
    pp = PPoly.from_spline(spl)
    first = basis.k - 1
    return PiecewisePoly(basis.knots, pp.c[:, first : first + basis.ncells])


@lru_cache(maxsize=64)
def prolongation(partition: MultilevelPartition, m: int) -> csr_matrix:
    """
    Knot-insertion matrix taking level-(m-1) coefficients to level-m coefficients.

    Rows are built with the discrete B-spline (Oslo) recursion: the fine coefficient i
    is alpha(i) . c with alpha(i) = R_1(t_{i+1}) ... R_p(t_{i+p}) over the coarse knots.

    Returns:
        csr_matrix: Shape (supports at level m, supports at level m - 1).
    """
    if not 1 <= m <= partition.L:
        raise DomainError(f"prolongation needs 1 <= m <= L, got m={m}")
    coarse, fine = BSplineBasis(partition, m - 1), BSplineBasis(partition, m)
    p = partition.k - 1
    tau = coarse.padded_knots
    # Fine knots share the coarse padding, so the coarse knot vector is a subsequence.
    t = np.concatenate([tau[:p], fine.knots, tau[len(tau) - p :]])
    i = p + np.arange(fine.size)
    mu = np.searchsorted(tau, t[i] + TOL * (tau[-1] - tau[0]), side="right") - 1
    alpha = np.ones((fine.size, 1))
    for r in range(1, p + 1):
        x = t[i + r][:, None]
        lo = tau[mu[:, None] - r + 1 + np.arange(r)[None, :]]
        hi = tau[mu[:, None] + 1 + np.arange(r)[None, :]]
        w = (x - lo) / (hi - lo)
        nxt = np.zeros((fine.size, r + 1))
        nxt[:, :r] += alpha * (1.0 - w)
        nxt[:, 1:] += alpha * w
        alpha = nxt
    # Padded coarse index mu - p + a, shifted past the k - 1 padding functions.
    cols = mu[:, None] - 2 * p + np.arange(p + 1)[None, :]
    rows = np.broadcast_to(np.arange(fine.size)[:, None], cols.shape)
    keep = (cols >= 0) & (cols < coarse.size) & (alpha != 0.0)
    return csr_matrix((alpha[keep], (rows[keep], cols[keep])), shape=(fine.size, coarse.size))


def refine_coefficients(partition: MultilevelPartition, m: int, coefficients: np.ndarray) -> np.ndarray:
    """
    Express a level-(m-1) spline in the level-m basis by knot insertion (exact).
    """
    c = np.asarray(coefficients, dtype=float)
    P = prolongation(partition, m)
    if c.shape != (P.shape[1],):
        raise DecompositionError(f"level {m - 1} needs {P.shape[1]} coefficients, got {c.shape}")
    return P @ c


def synthesize(partition: MultilevelPartition, per_level: Dict[int, np.ndarray]) -> PiecewisePoly:
    """
    Sum of level splines, each given by its coefficient vector, as one finest-level spline.
    """
    c = np.zeros(BSplineBasis(partition, 0).size)
    for m in range(partition.L + 1):
        if m:
            c = refine_coefficients(partition, m, c)
        if m in per_level:
            c = c + per_level[m]
    return spline_to_pp(BSplineBasis(partition, partition.L), c)


@dataclass(frozen=True, eq=False)
class SplineDecomposition:
    """
    Coarse base spline plus level details of f over a partition.

    Attributes:
        partition (MultilevelPartition): Partition the coefficients live on.
        q (float): Exponent of the near-best projector used.
        base (np.ndarray): Level-0 coefficients of T_{0,q}(f).
        details (Dict[int, np.ndarray]): Level m -> coefficients of T_{m,q}(f) - T_{m-1,q}(f), m = 1..L.
        name (str): Name of the decomposed function.
        source (Optional[Func]): The decomposed function, when still available.
    """

    partition: MultilevelPartition
    q: float
    base: np.ndarray
    details: Dict[int, np.ndarray] = field(default_factory=dict)
    name: str = ""
    source: Optional[Func] = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        P = self.partition
        expected = BSplineBasis(P, 0).size
        if np.shape(self.base) != (expected,):
            raise DecompositionError(f"base needs {expected} coefficients, got {np.shape(self.base)}")
        for m, c in self.details.items():
            if not 1 <= m <= P.L:
                raise DecompositionError(f"detail level {m} outside [1, {P.L}]")
            expected = P.ncells(m) - P.k + 1
            if np.shape(c) != (expected,):
                raise DecompositionError(f"level {m} needs {expected} coefficients, got {np.shape(c)}")

    @property
    def levels(self) -> Dict[int, np.ndarray]:
        out = {0: np.asarray(self.base, dtype=float)}
        out.update({m: np.asarray(c, dtype=float) for m, c in sorted(self.details.items())})
        return out

    def count(self, m: int) -> int:
        return len(self.levels[m]) if m in self.levels else 0

    def flat(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        All coefficients pooled, base first.

        Returns:
            Tuple[np.ndarray, np.ndarray, np.ndarray]: (levels, indices, values).
        """
        lv = self.levels
        ms = np.concatenate([np.full(len(c), m) for m, c in lv.items()])
        js = np.concatenate([np.arange(len(c)) for c in lv.values()])
        vals = np.concatenate(list(lv.values()))
        return ms, js, vals

    def scaled(self, alpha: float) -> "SplineDecomposition":
        return SplineDecomposition(
            self.partition,
            self.q,
            alpha * np.asarray(self.base),
            {m: alpha * c for m, c in self.details.items()},
            self.name,
            None if self.source is None else self.source.scaled(alpha),
        )

    def to_dict(self) -> Dict:
        return {
            "partition_ref": self.partition.digest(),
            "name": self.name,
            "k": int(self.partition.k),
            "q": float(self.q),
            "base": [{"j": j, "coef": float(c)} for j, c in enumerate(self.base)],
            "details": [
                {"m": m, "j": j, "coef": float(c)}
                for m, coefs in sorted(self.details.items())
                for j, c in enumerate(coefs)
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict, partition: MultilevelPartition) -> "SplineDecomposition":
        """
        Rebuild a decomposition and validate every index against the partition.

        Missing coefficients are zero.

        Raises:
            DecompositionError: On a partition mismatch or an index out of range.
        """
        try:
            ref = data.get("partition_ref")
            if ref is not None and ref != partition.digest():
                raise DecompositionError(f"decomposition belongs to partition {ref}, not {partition.digest()}")
            if int(data["k"]) != partition.k:
                raise DecompositionError(f"decomposition has k={data['k']}, partition has k={partition.k}")
            base = np.zeros(BSplineBasis(partition, 0).size)
            details = {m: np.zeros(partition.ncells(m) - partition.k + 1) for m in range(1, partition.L + 1)}
            for item in data["base"]:
                j = int(item["j"])
                if not 0 <= j < len(base):
                    raise DecompositionError(f"base index {j} outside [0, {len(base)})")
                base[j] = float(item["coef"])
            for item in data["details"]:
                m, j = int(item["m"]), int(item["j"])
                if m not in details:
                    raise DecompositionError(f"detail level {m} outside [1, {partition.L}]")
                if not 0 <= j < len(details[m]):
                    raise DecompositionError(f"detail index ({m}, {j}) outside [0, {len(details[m])})")
                details[m][j] = float(item["coef"])
            q = float(data["q"])
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, DecompositionError):
                raise
            raise DecompositionError(f"malformed decomposition data: {e}") from e
        return cls(partition, q, base, details, str(data.get("name", "")))


def decompose(
    f: Func,
    partition: MultilevelPartition,
    q: float,
    rule: Optional[QuadratureRule] = None,
    method: str = "insertion",
) -> SplineDecomposition:
    """
    Multilevel decomposition f ~ T_{0,q}(f) + sum_m (T_{m,q}(f) - T_{m-1,q}(f)).

    Args:
        f (Func): Function supported inside the window.
        partition (MultilevelPartition): Partition.
        q (float): Exponent of the near-best projector.
        rule (Optional[QuadratureRule]): Quadrature rule; defaults to the finest level split at f's breakpoints.
        method (str): 'insertion' refines T_{m-1,q}(f) by knot insertion and subtracts;
            'direct' applies the level-m functionals to the piecewise difference.

    Returns:
        SplineDecomposition: Base and details for m = 1..L.
    """
    if method not in METHODS:
        raise DomainError(f"unknown decomposition method {method!r}, expected one of {METHODS}")
    if q < 1:
        raise DomainError(f"q={q} must be >= 1")
    rule = rule or QuadratureRule.from_partition(partition, GAUSS_ORDER, f.breakpoints)
    prev = quasi_interp(f, partition, 0, q, rule)
    base = prev
    details = {}
    for m in range(1, partition.L + 1):
        cur = quasi_interp(f, partition, m, q, rule)
        if method == "insertion":
            details[m] = cur - refine_coefficients(partition, m, prev)
        else:
            diff = spline_to_pp(BSplineBasis(partition, m), cur) - spline_to_pp(BSplineBasis(partition, m - 1), prev)
            details[m] = dual_functionals(BSplineBasis(partition, m), diff)
        logger.debug("Decomposing %s: level %d, %d coefficients", f.name, m, len(cur))
        prev = cur
    return SplineDecomposition(partition, q, base, details, f.name, f)


def reconstruct(dec: SplineDecomposition, keep: Optional[Dict[int, np.ndarray]] = None) -> PiecewisePoly:
    """
    Exact finest-level spline base + sum_m sum_Q b_Q phi_Q.

    Args:
        dec (SplineDecomposition): Decomposition.
        keep (Optional[Dict[int, np.ndarray]]): Per-level boolean masks; unmasked coefficients are dropped.

    Returns:
        PiecewisePoly: Over the finest knots.
    """
    levels = dec.levels
    if keep is not None:
        levels = {m: np.where(keep[m], c, 0.0) if m in keep else np.zeros_like(c) for m, c in levels.items()}
    return synthesize(dec.partition, levels)


def spline_from_terms(
    partition: MultilevelPartition, terms: Iterable[Tuple[int, int, float]]
) -> PiecewisePoly:
    """
    Element of Sigma_n built from (level, index, coefficient) triples.

    Raises:
        DomainError: If a triple names a support outside the partition.
    """
    per_level: Dict[int, np.ndarray] = {}
    for m, j, c in terms:
        if not 0 <= m <= partition.L:
            raise DomainError(f"term level {m} outside [0, {partition.L}]")
        size = partition.ncells(m) - partition.k + 1
        if not 0 <= j < size:
            raise DomainError(f"term index ({m}, {j}) outside [0, {size})")
        per_level.setdefault(m, np.zeros(size))[j] += float(c)
    return synthesize(partition, per_level)


@dataclass(frozen=True)
class StableBasisReport:
    """Both sides of the discrete stability equivalence of a level spline."""

    cell_side: float
    coefficient_side: float
    ratio: float
    degenerate: bool


def _tau_sum(values: np.ndarray, tau: float) -> float:
    if np.isinf(tau):
        return float(np.max(values)) if values.size else 0.0
    return float(np.sum(values ** tau) ** (1.0 / tau))


def stable_basis_check(
    basis: BSplineBasis, coefficients: np.ndarray, p: float, tau: float
) -> StableBasisReport:
    """
    Compare (sum_I ||S||_{L^p(I)}^tau)^{1/tau} with (sum_Q ||b_Q phi_Q||_p^tau)^{1/tau}.

    Args:
        basis (BSplineBasis): Level basis.
        coefficients (np.ndarray): Level coefficients b_Q.
        p (float): Integrability exponent, >= 1 or inf.
        tau (float): Summation exponent, > 0 or inf.

    Returns:
        StableBasisReport: ratio = cell_side / coefficient_side; flagged degenerate when both vanish.
    """
    if p < 1:
        raise DomainError(f"p={p} must be >= 1")
    if tau <= 0:
        raise DomainError(f"tau={tau} must be > 0")
    b = np.asarray(coefficients, dtype=float)
    S = spline_to_pp(basis, b)
    x, w = gauss_nodes(basis.knots, GAUSS_ORDER)
    n = basis.ncells
    vals = np.abs(S(x)).reshape(n, GAUSS_ORDER)
    wts = w.reshape(n, GAUSS_ORDER)
    D = basis.design_matrix(x)
    if np.isinf(p):
        cell = vals.max(axis=1)
        phi = np.asarray(abs(D).max(axis=0).todense()).ravel()
    else:
        cell = np.sum(wts * vals ** p, axis=1) ** (1.0 / p)
        phi = np.asarray(D.power(p).T @ w).ravel() ** (1.0 / p)
    lhs = _tau_sum(cell, tau)
    rhs = _tau_sum(np.abs(b) * phi, tau)
    if rhs == 0.0:
        return StableBasisReport(lhs, rhs, 1.0 if lhs == 0.0 else np.inf, lhs == 0.0)
    return StableBasisReport(lhs, rhs, lhs / rhs, False)
