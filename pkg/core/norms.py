# ************************************************************
#  core/norms.py
# ************************************************************

"""
Norms module.

Estimators for BMO and BMO^{q,k}, the three Besov norms (local error form,
coefficient form and modulus form), and the sequence norms l^tau and g^q over
a nested structure.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from core.bspline import SplineDecomposition
from core.errors import DomainError
from core.funcspace import GAUSS_ORDER, Func, QuadratureRule, lq_norm, merge_breakpoints
from core.localpoly import difference_norms, projection_errors
from core.partition import (
    Interval,
    MultilevelPartition,
    NestedStructure,
    nested_structure,
    omega_cell_ranges,
)

logger = logging.getLogger(__name__)

VARIANTS = ("E", "Q", "Phi-upper", "modulus")
# Steps per octave sampled for the global modulus.
MODULUS_OCTAVE_SAMPLES = 8


@dataclass(frozen=True)
class BmoEstimate:
    """
    Largest mean oscillation over the evaluated interval family (a lower bound of the sup).

    Attributes:
        value (float): ((1/|J|) int_J |f - avg_J f|^q)^{1/q} at the maximizing J.
        argmax (Interval): Maximizing interval.
        family_size (int): Number of intervals evaluated.
        q (float): Exponent.
    """

    value: float
    argmax: Interval
    family_size: int
    q: float


@dataclass(frozen=True)
class BesovNorm:
    """Computed Besov norm; tau = 1 / alpha always."""

    alpha: float
    tau: float
    k: int
    q: float
    variant: str
    value: float

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "alpha": self.alpha,
            "tau": self.tau,
            "k": self.k,
            "q": self.q,
            "value": self.value,
        }


@dataclass(frozen=True, eq=False)
class CoeffSequence:
    """
    Scalar sequence h_xi over the nodes of a nested structure.

    Attributes:
        structure (NestedStructure): Index set and intervals U_xi.
        values (np.ndarray): One value per node, in the structure's node order.
    """

    structure: NestedStructure
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.structure.size,):
            raise DomainError(f"sequence needs {self.structure.size} values, got {values.shape}")
        object.__setattr__(self, "values", values)

    def scaled(self, alpha: float) -> "CoeffSequence":
        return CoeffSequence(self.structure, alpha * self.values)

    def with_values(self, values: np.ndarray) -> "CoeffSequence":
        return CoeffSequence(self.structure, values)

    @classmethod
    def from_decomposition(
        cls, dec: SplineDecomposition, structure: Optional[NestedStructure] = None
    ) -> "CoeffSequence":
        """Pool base and detail coefficients onto the nested structure of their supports."""
        structure = structure or nested_structure(dec.partition)
        _, _, values = dec.flat()
        return cls(structure, values)


def _check_alpha(alpha: float) -> float:
    if not alpha > 0:
        raise DomainError(f"alpha={alpha} must be > 0")
    return 1.0 / alpha


def _tau_sum(values: np.ndarray, tau: float) -> float:
    a = np.abs(np.asarray(values, dtype=float))
    if np.isinf(tau):
        return float(np.max(a)) if a.size else 0.0
    return float(np.sum(a ** tau) ** (1.0 / tau))


def _dyadic_layers(window: Interval, finest: float) -> List[Tuple[np.ndarray, np.ndarray]]:
    # Standard dyadic intervals [i 2^-nu, (i+1) 2^-nu] inside the window and their half shifts.
    layers = []
    nu = int(np.floor(-np.log2(window.length)))
    tol = 1e-12 * window.length
    while 2.0 ** -nu >= finest * (1.0 - 1e-12):
        h = 2.0 ** -nu
        for shift in (0.0, 0.5):
            first = np.ceil((window.lo - tol) / h - shift)
            last = np.floor((window.hi + tol) / h - shift) - 1
            if last >= first:
                lo = (np.arange(first, last + 1) + shift) * h
                lo = lo[(lo >= window.lo - tol) & (lo + h <= window.hi + tol)]
                if len(lo):
                    layers.append((lo, lo + h))
        nu += 1
    return layers


def _partition_layers(partition: MultilevelPartition) -> List[Tuple[np.ndarray, np.ndarray]]:
    # Cells of every level, and for m < L the copies [c_j, c_{j+1}] between the splitting knots.
    layers = []
    for m in range(partition.L + 1):
        x = partition.knots(m)
        layers.append((x[:-1], x[1:]))
        if m < partition.L:
            fine = partition.knots(m + 1)
            mid = 0.5 * (x[:-1] + x[1:])
            pos = np.clip(np.searchsorted(fine, mid), 1, len(fine) - 1)
            # Child knot nearest each cell midpoint.
            split = np.where(np.abs(fine[pos - 1] - mid) < np.abs(fine[pos] - mid), fine[pos - 1], fine[pos])
            if len(split) > 1:
                layers.append((split[:-1], split[1:]))
    return layers


def bmo_family(partition: MultilevelPartition) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Interval family scanned by bmo_norm, as layers of pairwise disjoint intervals.
    """
    finest = float(np.min(partition.lengths(partition.L)))
    return _partition_layers(partition) + _dyadic_layers(partition.window, finest)


def _layer_oscillation(
    fx: np.ndarray, rule: QuadratureRule, lo: np.ndarray, hi: np.ndarray, q: float
) -> np.ndarray:
    a, b = rule.cell_index(lo), rule.cell_index(hi)
    ncells = rule.ncells
    owner = np.searchsorted(a, np.arange(ncells), side="right") - 1
    covered = (owner >= 0) & (np.arange(ncells) < b[np.maximum(owner, 0)])
    cells = np.flatnonzero(covered)
    own = owner[cells]
    n = len(lo)
    cell_int = np.sum(rule.weights[cells] * fx[cells], axis=1)
    length = hi - lo
    avg = np.bincount(own, weights=cell_int, minlength=n) / length
    dev = np.abs(fx[cells] - avg[own][:, None]) ** q
    osc = np.bincount(own, weights=np.sum(rule.weights[cells] * dev, axis=1), minlength=n)
    return (osc / length) ** (1.0 / q)


def bmo_norm(
    f: Func, partition: MultilevelPartition, q: float, rule: Optional[QuadratureRule] = None
) -> BmoEstimate:
    """
    Estimate ||f||_BMO in its L^q mean-oscillation form.

    The family holds every partition cell, the half-shifted copies between the splitting
    knots of neighbouring cells, and the standard dyadic intervals inside the window with
    their half shifts. Each layer of disjoint intervals is handled in one vectorized pass.

    Args:
        f (Func): Function.
        partition (MultilevelPartition): Partition.
        q (float): Exponent, finite and >= 1.
        rule (Optional[QuadratureRule]): Base rule; refined at the family endpoints and f's breakpoints.

    Returns:
        BmoEstimate: Max over the family and where it is attained.
    """
    if not 1 <= q < np.inf:
        raise DomainError(f"q={q} must be finite and >= 1")
    layers = bmo_family(partition)
    rule = rule or QuadratureRule.from_partition(partition, GAUSS_ORDER)
    ends = merge_breakpoints(*[np.concatenate([lo, hi]) for lo, hi in layers])
    rule = rule.refined(merge_breakpoints(ends, f.breakpoints))
    fx = rule.sample(f)
    best, where, size = 0.0, Interval(*partition.window), 0
    for lo, hi in layers:
        vals = _layer_oscillation(fx, rule, lo, hi, q)
        size += len(vals)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, where = float(vals[i]), Interval(float(lo[i]), float(hi[i]))
    logger.debug("BMO estimate of %s: %.6g over %d intervals (q=%g)", f.name, best, size, q)
    return BmoEstimate(best, where, size, q)


def omega_errors(
    f: Func, partition: MultilevelPartition, m: int, k: int, q: float, rule: QuadratureRule
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Near-best projector error on Omega_I for every level-m cell I.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (errors, cell lengths |I|).
    """
    x = partition.knots(m)
    first, last = omega_cell_ranges(partition, m)
    return projection_errors(f, x[first], x[last], k, q, rule), np.diff(x)


def _rule_for(f: Func, partition: MultilevelPartition, rule: Optional[QuadratureRule]) -> QuadratureRule:
    rule = rule or QuadratureRule.from_partition(partition, GAUSS_ORDER)
    return rule.for_function(f)


def bmo_qk_norm(
    f: Func,
    partition: MultilevelPartition,
    q: float,
    k: Optional[int] = None,
    rule: Optional[QuadratureRule] = None,
) -> float:
    """
    sup over cells I of all levels of |I|^{-1/q} E(f, Omega_I)_q, with E the near-best projector error.
    """
    if q < 1:
        raise DomainError(f"q={q} must be >= 1")
    k = k or partition.k
    rule = _rule_for(f, partition, rule)
    best = 0.0
    for m in range(partition.L + 1):
        err, h = omega_errors(f, partition, m, k, q, rule)
        scale = 1.0 if np.isinf(q) else h ** (-1.0 / q)
        best = max(best, float(np.max(scale * err)))
    return best


def besov_norm_E(
    f: Func,
    partition: MultilevelPartition,
    alpha: float,
    k: int,
    q: float,
    rule: Optional[QuadratureRule] = None,
) -> BesovNorm:
    """
    Local-error form (sum_I (|I|^{-1/q} E_k(f, Omega_I)_q)^tau)^{1/tau} over all cells of levels 0..L.

    Args:
        f (Func): Function.
        partition (MultilevelPartition): Partition.
        alpha (float): Smoothness, > 0; tau = 1/alpha.
        k (int): Order of the local polynomials.
        q (float): Exponent, >= 1.
        rule (Optional[QuadratureRule]): Base rule.

    Returns:
        BesovNorm: variant 'E'.
    """
    tau = _check_alpha(alpha)
    if q < 1:
        raise DomainError(f"q={q} must be >= 1")
    rule = _rule_for(f, partition, rule)
    terms = []
    for m in range(partition.L + 1):
        err, h = omega_errors(f, partition, m, k, q, rule)
        scale = 1.0 if np.isinf(q) else h ** (-1.0 / q)
        terms.append(scale * err)
    value = _tau_sum(np.concatenate(terms), tau)
    logger.debug("Besov E-norm of %s: %.6g (alpha=%g, k=%d, q=%g)", f.name, value, alpha, k, q)
    return BesovNorm(alpha, tau, k, q, "E", value)


def besov_norm_Q(dec: SplineDecomposition, alpha: float) -> BesovNorm:
    """
    Coefficient form: l^tau norm of the base and detail coefficients, tau = 1/alpha.
    """
    tau = _check_alpha(alpha)
    _, _, values = dec.flat()
    return BesovNorm(alpha, tau, dec.partition.k, dec.q, "Q", _tau_sum(values, tau))


def besov_norm_phi_upper(dec: SplineDecomposition, alpha: float) -> BesovNorm:
    """
    Upper bound of the infimum-over-representations norm, from the canonical representation.
    """
    norm = besov_norm_Q(dec, alpha)
    return BesovNorm(norm.alpha, norm.tau, norm.k, norm.q, "Phi-upper", norm.value)


def besov_norm_modulus(
    f: Func,
    partition: MultilevelPartition,
    alpha: float,
    k: int,
    rule: Optional[QuadratureRule] = None,
) -> BesovNorm:
    """
    Modulus form (sum_nu (2^{alpha nu} omega_k(f, 2^{-nu})_tau)^tau)^{1/tau}.

    nu runs over the integers with 2^{-nu} between the finest cell length and the window
    length; omega_k(f, t) is the largest sampled difference norm over the window with h <= t.

    Raises:
        DomainError: If tau = 1/alpha < 1.
    """
    tau = _check_alpha(alpha)
    if tau < 1:
        raise DomainError(f"the modulus form needs tau = 1/alpha >= 1, got tau={tau:g}")
    rule = _rule_for(f, partition, rule)
    win = partition.window
    finest = float(np.min(partition.lengths(partition.L)))
    nus = np.arange(int(np.ceil(-np.log2(win.length))), int(np.floor(-np.log2(finest))) + 1)
    hmax = win.length / k
    octaves = max(1.0, np.log2(hmax / (finest / 2.0)))
    hs = np.geomspace(finest / 2.0, hmax, int(np.ceil(octaves * MODULUS_OCTAVE_SAMPLES)) + 1)
    d = difference_norms(f, win, k, tau, rule, hs)
    running = np.maximum.accumulate(d)
    terms = []
    for nu in nus:
        t = 2.0 ** -float(nu)
        idx = np.searchsorted(hs, t * (1.0 + 1e-12), side="right") - 1
        omega = running[idx] if idx >= 0 else 0.0
        terms.append(2.0 ** (alpha * nu) * omega)
    value = _tau_sum(np.array(terms), tau)
    return BesovNorm(alpha, tau, k, tau, "modulus", value)


def ltau_norm(h: CoeffSequence, tau: float) -> float:
    """(sum |h_xi|^tau)^{1/tau}, tau > 0."""
    if not tau > 0:
        raise DomainError(f"tau={tau} must be > 0")
    return _tau_sum(h.values, tau)


def subtree_sums(structure: NestedStructure, weights: np.ndarray) -> np.ndarray:
    """
    For every node, the sum of weights over its subtree (itself included), bottom-up.
    """
    acc = np.array(weights, dtype=float)
    parent = structure.parent
    for m in range(structure.depth - 1, 0, -1):
        idx = np.flatnonzero((structure.level == m) & (parent >= 0))
        np.add.at(acc, parent[idx], acc[idx])
    return acc


def gq_norm(h: CoeffSequence, q: float) -> float:
    """
    sup over xi of ((1/|U_xi|) sum_{U_eta in U_xi} |h_eta|^q |U_eta|)^{1/q}.

    q = inf gives the sup norm.
    """
    if not q > 0:
        raise DomainError(f"q={q} must be > 0")
    a = np.abs(h.values)
    if np.isinf(q):
        return float(np.max(a)) if a.size else 0.0
    s = h.structure
    acc = subtree_sums(s, a ** q * s.lengths)
    return float(np.max(acc / s.lengths) ** (1.0 / q)) if a.size else 0.0


def lp_bmo_bound(
    f: Func,
    support: Interval,
    p: float,
    partition: MultilevelPartition,
    rule: Optional[QuadratureRule] = None,
) -> float:
    """
    Ratio |I|^{-1/p} ||f||_{L^p(I)} / ||f||_BMO for f vanishing outside I (BMO with exponent p).

    Returns:
        float: inf when the BMO estimate vanishes on a nonzero f.
    """
    I = Interval(*support)
    rule = _rule_for(f, partition, rule)
    lp = lq_norm(f, I, p, rule) * I.length ** (-1.0 / p)
    bmo = bmo_norm(f, partition, p, rule).value
    if bmo == 0.0:
        return 0.0 if lp == 0.0 else np.inf
    return lp / bmo
