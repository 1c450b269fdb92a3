# ************************************************************
#  core/funcspace.py
# ************************************************************

"""
Function space module.

Function representations over the window, the composite Gauss rule, and exact
piecewise-polynomial arithmetic used by all norm and projection code.
"""

import csv
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PPoly

from core.errors import DomainError, FunctionError
from core.partition import TOL, Interval, MultilevelPartition

logger = logging.getLogger(__name__)

GAUSS_ORDER = 4


class PiecewisePoly:
    """
    Right-continuous piecewise polynomial over strictly increasing breakpoints.

    Pieces are stored in the local power basis (x - x_i)^d of scipy's PPoly, highest
    power first. The function is zero outside [breakpoints[0], breakpoints[-1]].
    """

    def __init__(self, breakpoints: Sequence[float], coefficients: np.ndarray) -> None:
        x = np.asarray(breakpoints, dtype=float)
        c = np.atleast_2d(np.asarray(coefficients, dtype=float))
        if x.ndim != 1 or len(x) < 2 or np.any(np.diff(x) <= 0):
            raise DomainError("breakpoints must be strictly increasing with at least two entries")
        if c.shape[1] != len(x) - 1:
            raise DomainError(f"expected {len(x) - 1} pieces, got {c.shape[1]}")
        self._pp = PPoly(c, x, extrapolate=False)

    @property
    def breakpoints(self) -> np.ndarray:
        return self._pp.x

    @property
    def coefficients(self) -> np.ndarray:
        return self._pp.c

    @property
    def order(self) -> int:
        return self._pp.c.shape[0]

    @property
    def domain(self) -> Interval:
        return Interval(self._pp.x[0], self._pp.x[-1])

    def __call__(self, x, nu: int = 0) -> np.ndarray:
        values = self._pp(np.asarray(x, dtype=float), nu)
        return np.nan_to_num(values, nan=0.0)

    def derivatives_at(self, x, count: int) -> np.ndarray:
        """
        Derivatives of orders 0..count-1 taken from the piece containing each point.

        Returns:
            np.ndarray: Shape (count, len(x)).
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([self(x, nu) for nu in range(count)])

    def integrate(self, a: float, b: float) -> float:
        lo, hi = max(a, self._pp.x[0]), min(b, self._pp.x[-1])
        if hi <= lo:
            return 0.0
        return float(self._pp.integrate(lo, hi))

    def refine(self, breakpoints: Sequence[float], order: Optional[int] = None) -> "PiecewisePoly":
        """
        Re-express the function over a breakpoint set containing the current one.

        The coefficients on a new piece starting at y are the Taylor coefficients at y of
        the old piece containing y.
        """
        y = np.asarray(breakpoints, dtype=float)
        order = max(order or 0, self.order)
        c = np.zeros((order, len(y) - 1))
        for d in range(self.order):
            c[order - 1 - d] = self(y[:-1], d) / math.factorial(d)
        return PiecewisePoly(y, c)

    def _merged(self, other: "PiecewisePoly") -> Tuple["PiecewisePoly", "PiecewisePoly"]:
        y = merge_breakpoints(self.breakpoints, other.breakpoints)
        order = max(self.order, other.order)
        return self.refine(y, order), other.refine(y, order)

    def __add__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        a, b = self._merged(other)
        return PiecewisePoly(a.breakpoints, a.coefficients + b.coefficients)

    def __sub__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        a, b = self._merged(other)
        return PiecewisePoly(a.breakpoints, a.coefficients - b.coefficients)

    def __mul__(self, alpha: float) -> "PiecewisePoly":
        return PiecewisePoly(self.breakpoints, float(alpha) * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self) -> "PiecewisePoly":
        return self * -1.0

    def sup_norm(self) -> float:
        """Sup norm over the domain, from piece endpoints and interior critical points."""
        best = float(np.max(np.abs(self(self.breakpoints[:-1]))))
        x = self.breakpoints
        for i in range(len(x) - 1):
            p = Polynomial(self.coefficients[::-1, i])
            width = x[i + 1] - x[i]
            candidates = [width * (1 - 1e-15)]
            if p.degree() >= 2:
                roots = p.deriv().roots()
                candidates.extend(r.real for r in roots if abs(r.imag) < 1e-12 and 0 < r.real < width)
            best = max(best, float(np.max(np.abs(p(np.array(candidates))))))
        return best

    @classmethod
    def from_polynomials(
        cls, breakpoints: Sequence[float], polys: Sequence[Polynomial]
    ) -> "PiecewisePoly":
        """
        Build from one global-variable polynomial per piece.
        """
        x = np.asarray(breakpoints, dtype=float)
        order = max(p.degree() for p in polys) + 1
        c = np.zeros((order, len(x) - 1))
        for i, p in enumerate(polys):
            for d in range(p.degree() + 1):
                c[order - 1 - d, i] = p.deriv(d)(x[i]) / math.factorial(d)
        return cls(x, c)

    @classmethod
    def zero(cls, window: Interval) -> "PiecewisePoly":
        return cls([window.lo, window.hi], np.zeros((1, 1)))


def merge_breakpoints(*arrays: Iterable[float]) -> np.ndarray:
    """Sorted union of breakpoint sets, collapsing points closer than the knot tolerance."""
    y = np.unique(np.concatenate([np.asarray(a, dtype=float) for a in arrays]))
    if len(y) < 2:
        return y
    tol = TOL * (y[-1] - y[0])
    keep = np.concatenate(([True], np.diff(y) > tol))
    return y[keep]


class Func(ABC):
    """
    Evaluable function over the window.

    Attributes:
        name (str): Identifier used in reports.
        support (Interval): Declared support; the function vanishes outside it.
    """

    def __init__(self, name: str, support: Interval) -> None:
        self.name = name
        self.support = Interval(*support)

    @abstractmethod
    def evaluate(self, x) -> np.ndarray:
        """Vectorized, deterministic evaluation."""

    @property
    def exact(self) -> Optional[PiecewisePoly]:
        """Exact piecewise-polynomial form, when one exists."""
        return None

    @property
    def breakpoints(self) -> np.ndarray:
        """Points where the function is not smooth; quadrature splits cells there."""
        return np.empty(0)

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def scaled(self, alpha: float) -> "Func":
        return ScaledFunc(self, alpha)

    def minus(self, g: PiecewisePoly, name: Optional[str] = None) -> "Func":
        """Residual f - g; exact when f has an exact form."""
        name = name or f"{self.name}-residual"
        support = Interval(min(self.support.lo, g.domain.lo), max(self.support.hi, g.domain.hi))
        if self.exact is not None:
            return PiecewiseFunc(self.exact - g, name, support)
        return CallableFunc(
            lambda x: self.evaluate(x) - g(x),
            name,
            support,
            merge_breakpoints(self.breakpoints, g.breakpoints),
        )

    def check_support(self, window: Interval, samples: int = 4001) -> bool:
        """Sample the window and confirm the function vanishes outside its support."""
        x = np.linspace(window.lo, window.hi, samples)
        outside = (x < self.support.lo) | (x > self.support.hi)
        return bool(np.all(self.evaluate(x[outside]) == 0.0))


class PiecewiseFunc(Func):
    """Function given exactly by a piecewise polynomial."""

    def __init__(
        self, pp: PiecewisePoly, name: str, support: Optional[Interval] = None, inexact: bool = False
    ) -> None:
        super().__init__(name, support if support is not None else pp.domain)
        self.pp = pp
        self.inexact = inexact

    def evaluate(self, x) -> np.ndarray:
        return self.pp(x)

    @property
    def exact(self) -> Optional[PiecewisePoly]:
        return self.pp

    @property
    def breakpoints(self) -> np.ndarray:
        return self.pp.breakpoints


class CallableFunc(Func):
    """Function given by a vectorized callable."""

    def __init__(
        self,
        fn: Callable[[np.ndarray], np.ndarray],
        name: str,
        support: Interval,
        breakpoints: Sequence[float] = (),
    ) -> None:
        super().__init__(name, support)
        self._fn = fn
        self._breaks = np.asarray(breakpoints, dtype=float)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.support.lo) & (x <= self.support.hi)
        out = np.zeros_like(x)
        out[inside] = self._fn(x[inside])
        return out

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breaks


class ScaledFunc(Func):
    """alpha * f."""

    def __init__(self, base: Func, alpha: float) -> None:
        super().__init__(f"{alpha:g}*{base.name}", base.support)
        self.base = base
        self.alpha = float(alpha)

    def evaluate(self, x) -> np.ndarray:
        return self.alpha * self.base.evaluate(x)

    @property
    def exact(self) -> Optional[PiecewisePoly]:
        pp = self.base.exact
        return None if pp is None else pp * self.alpha

    @property
    def breakpoints(self) -> np.ndarray:
        return self.base.breakpoints


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Composite Gauss-Legendre rule with a fixed number of nodes per cell.

    Attributes:
        breaks (np.ndarray): Cell boundaries (the finest partition knots, possibly refined).
        order (int): Nodes per cell; exact through degree 2*order - 1.
        level (int): Finest partition level the cells come from, -1 when not partition-based.
    """

    breaks: np.ndarray
    order: int = GAUSS_ORDER
    level: int = -1

    def __post_init__(self) -> None:
        breaks = np.asarray(self.breaks, dtype=float)
        if breaks.ndim != 1 or len(breaks) < 2 or np.any(np.diff(breaks) <= 0):
            raise DomainError("quadrature breaks must be strictly increasing")
        t, w = leggauss(self.order)
        half = 0.5 * np.diff(breaks)
        mid = 0.5 * (breaks[:-1] + breaks[1:])
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "nodes", mid[:, None] + half[:, None] * t[None, :])
        object.__setattr__(self, "weights", half[:, None] * w[None, :])

    @property
    def ncells(self) -> int:
        return len(self.breaks) - 1

    @property
    def window(self) -> Interval:
        return Interval(self.breaks[0], self.breaks[-1])

    @classmethod
    def from_partition(
        cls, partition: MultilevelPartition, order: int = GAUSS_ORDER, extra: Sequence[float] = ()
    ) -> "QuadratureRule":
        """
        Rule on the finest level of a partition, optionally split at extra points.
        """
        win = partition.window
        extra = np.asarray(extra, dtype=float)
        extra = extra[(extra > win.lo) & (extra < win.hi)]
        return cls(merge_breakpoints(partition.knots(partition.L), extra), order, partition.L)

    def refined(self, extra: Sequence[float]) -> "QuadratureRule":
        extra = np.asarray(extra, dtype=float)
        extra = extra[(extra > self.breaks[0]) & (extra < self.breaks[-1])]
        if len(extra) == 0:
            return self
        return QuadratureRule(merge_breakpoints(self.breaks, extra), self.order, self.level)

    def for_function(self, f: Func) -> "QuadratureRule":
        return self.refined(f.breakpoints)

    def sample(self, f: Func) -> np.ndarray:
        """Values of f at all nodes, shape (ncells, order)."""
        return f.evaluate(self.nodes)

    def cell_index(self, x: Sequence[float]) -> np.ndarray:
        """Index of the rule cell boundary matching each point (points must be boundaries)."""
        x = np.asarray(x, dtype=float)
        tol = TOL * self.window.length
        pos = np.searchsorted(self.breaks, x - tol)
        pos = np.minimum(pos, len(self.breaks) - 1)
        if np.any(np.abs(self.breaks[pos] - x) > tol):
            raise DomainError("interval endpoints are not quadrature cell boundaries")
        return pos

    def nodes_on(self, J: Interval, extra: Sequence[float] = ()) -> Tuple[np.ndarray, np.ndarray]:
        """
        Composite Gauss nodes and weights on J, splitting edge cells and at extra points.
        """
        lo, hi = J
        tol = TOL * self.window.length
        inner = self.breaks[(self.breaks > lo + tol) & (self.breaks < hi - tol)]
        extra = np.asarray(extra, dtype=float)
        extra = extra[(extra > lo + tol) & (extra < hi - tol)]
        edges = merge_breakpoints([lo, hi], inner, extra)
        return gauss_nodes(edges, self.order)


def gauss_nodes(edges: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Flattened composite Gauss-Legendre nodes and weights over consecutive edges."""
    t, w = leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    wx = (half[:, None] * w[None, :]).ravel()
    return x, wx


def _check_interval(J: Interval, rule: QuadratureRule) -> Interval:
    J = Interval(float(J[0]), float(J[1]))
    tol = TOL * rule.window.length
    if not rule.window.contains(J, tol):
        raise DomainError(f"interval {tuple(J)} lies outside the window {tuple(rule.window)}")
    if J.length < 0:
        raise DomainError(f"interval {tuple(J)} is reversed")
    return J


def integrate(f: Func, J: Interval, rule: QuadratureRule) -> float:
    """
    Integral of f over J.

    Args:
        f (Func): Integrand.
        J (Interval): Interval inside the window.
        rule (QuadratureRule): Composite Gauss rule.

    Returns:
        float: Exact for piecewise polynomials of degree < 2*order.
    """
    J = _check_interval(J, rule)
    if J.length == 0:
        return 0.0
    x, w = rule.nodes_on(J, f.breakpoints)
    return float(np.sum(w * f.evaluate(x)))


def lq_norm(f: Func, J: Interval, q: float, rule: QuadratureRule) -> float:
    """
    L^q(J) norm of f, q >= 1 (q = inf gives the max over the nodes).
    """
    if q < 1:
        raise DomainError(f"q={q} must be >= 1")
    J = _check_interval(J, rule)
    if J.length == 0:
        return 0.0
    x, w = rule.nodes_on(J, f.breakpoints)
    v = np.abs(f.evaluate(x))
    if np.isinf(q):
        return float(np.max(v))
    return float(np.sum(w * v ** q) ** (1.0 / q))


def average(f: Func, J: Interval, rule: QuadratureRule) -> float:
    """Mean value (1/|J|) * integral of f over J."""
    J = _check_interval(J, rule)
    if J.length <= 0:
        raise DomainError(f"interval {tuple(J)} is degenerate")
    return integrate(f, J, rule) / J.length


def load_csv(path: str, name: Optional[str] = None) -> PiecewiseFunc:
    """
    Ingest a sampled function from a CSV file with header 'x,value'.

    The samples become a continuous piecewise linear interpolant, zero outside the
    sampled range, flagged inexact.

    Raises:
        FunctionError: On a missing header, a malformed row or non-increasing x (line reported).
    """
    xs, vs = [], []
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["x", "value"]:
                raise FunctionError(f"{path}:1: expected header 'x,value'")
            for row in reader:
                line = reader.line_num
                if not row:
                    continue
                if len(row) != 2:
                    raise FunctionError(f"{path}:{line}: expected 2 fields, got {len(row)}")
                try:
                    x, v = float(row[0]), float(row[1])
                except ValueError as e:
                    raise FunctionError(f"{path}:{line}: {e}") from e
                if not (math.isfinite(x) and math.isfinite(v)):
                    raise FunctionError(f"{path}:{line}: non-finite value")
                if xs and x <= xs[-1]:
                    raise FunctionError(f"{path}:{line}: x must be strictly increasing")
                xs.append(x)
                vs.append(v)
    except OSError as e:
        raise FunctionError(f"cannot read {path}: {e}") from e
    if len(xs) < 2:
        raise FunctionError(f"{path}: need at least two samples")
    x = np.array(xs)
    v = np.array(vs)
    c = np.vstack([np.diff(v) / np.diff(x), v[:-1]])
    logger.debug("Ingested %d samples from %s", len(x), path)
    return PiecewiseFunc(PiecewisePoly(x, c), name or path, Interval(x[0], x[-1]), inexact=True)
