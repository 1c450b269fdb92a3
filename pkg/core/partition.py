# ************************************************************
#  core/partition.py
# ************************************************************

"""
Partition module.

Builds and validates regular multilevel partitions of a compact window of the
real line, the B-spline supports Q of every level, the neighbourhoods Omega_I,
and the nested structure of first-cell intervals used by the sequence-space
machinery.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.errors import DomainError, PartitionError

logger = logging.getLogger(__name__)

# Children per parent produced by the builders; loaded files may declare up to M0_MAX.
M0_BUILD = 2
M0_MAX = 8
# Finest cells shorter than this fraction of the window are below quadrature resolution.
RESOLUTION = 1e-8
# Relative slack used when comparing knots and length ratios.
TOL = 1e-9


class Interval(NamedTuple):
    """Closed interval [lo, hi] of the real line."""

    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol


class SupportIndex(NamedTuple):
    """Level-m support Q = [x_{m,j}, x_{m,j+k}]."""

    m: int
    j: int


class Cell(NamedTuple):
    """Level-m cell I = [x_{m,j}, x_{m,j+1}]."""

    m: int
    j: int


@dataclass(frozen=True, eq=False)
class MultilevelPartition:
    """
    Nested knot hierarchy over a compact window.

    Attributes:
        window (Interval): The window [a, b].
        levels (Tuple[np.ndarray, ...]): Strictly increasing knot vectors, level 0 first.
        k (int): Spline order (degree k - 1).
        lam (float): Declared regularity constant lambda >= 1.
        m0 (int): Declared maximal number of children per cell.
    """

    window: Interval
    levels: Tuple[np.ndarray, ...]
    k: int
    lam: float = 1.0
    m0: int = M0_BUILD

    def __post_init__(self) -> None:
        object.__setattr__(self, "window", Interval(float(self.window[0]), float(self.window[1])))
        frozen = []
        for knots in self.levels:
            arr = np.array(knots, dtype=float)
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "levels", tuple(frozen))
        self.validate()

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    def knots(self, m: int) -> np.ndarray:
        self._check_level(m)
        return self.levels[m]

    def ncells(self, m: int) -> int:
        return len(self.knots(m)) - 1

    def lengths(self, m: int) -> np.ndarray:
        return np.diff(self.knots(m))

    def cell(self, m: int, j: int) -> Interval:
        x = self.knots(m)
        return Interval(x[j], x[j + 1])

    def r_rho(self) -> Tuple[float, float]:
        """
        Bounds on child/parent length ratios implied by lambda and M_0.

        Returns:
            Tuple[float, float]: (r, rho) with r = 1/(M_0 lambda - lambda + 1), rho = lambda/(lambda + 1).
        """
        return 1.0 / (self.m0 * self.lam - self.lam + 1.0), self.lam / (self.lam + 1.0)

    def measured_lambda(self) -> float:
        """Largest levelwise max/min cell length ratio."""
        return max(float(np.max(np.diff(x)) / np.min(np.diff(x))) for x in self.levels)

    def truncated(self, L: int) -> "MultilevelPartition":
        """Return the same hierarchy cut at finest level L."""
        self._check_level(L)
        return MultilevelPartition(self.window, self.levels[: L + 1], self.k, self.lam, self.m0)

    def _check_level(self, m: int) -> None:
        if not 0 <= m <= self.L:
            raise DomainError(f"level {m} outside [0, {self.L}]")

    def validate(self) -> None:
        """
        Verify every defining condition, raising PartitionError naming the first violated one.
        """
        a, b = self.window
        if not (np.isfinite(a) and np.isfinite(b) and b > a):
            raise PartitionError(f"window [{a}, {b}] must have positive finite length")
        if int(self.k) != self.k or self.k < 2:
            raise PartitionError(f"spline order k={self.k} must be an integer >= 2")
        if self.lam < 1.0:
            raise PartitionError(f"regularity constant lambda={self.lam} must be >= 1")
        if not 2 <= self.m0 <= M0_MAX:
            raise PartitionError(f"M_0={self.m0} must lie in [2, {M0_MAX}]")
        if not self.levels:
            raise PartitionError("partition needs at least one level")
        width = b - a
        tol = TOL * width
        for m, x in enumerate(self.levels):
            if x.ndim != 1 or len(x) < 2 or not np.all(np.isfinite(x)):
                raise PartitionError(f"condition (a): level {m} is not a finite knot vector")
            if abs(x[0] - a) > tol or abs(x[-1] - b) > tol:
                raise PartitionError(f"condition (a): level {m} does not span the window")
            if np.any(np.diff(x) <= 0):
                raise PartitionError(f"condition (a): level {m} knots are not strictly increasing")
        if len(self.levels[0]) - 1 < 2 * self.k + 1:
            raise PartitionError(
                f"level 0 has {len(self.levels[0]) - 1} cells, needs at least 2k+1={2 * self.k + 1}"
            )
        if np.min(np.diff(self.levels[-1])) < RESOLUTION * width:
            raise PartitionError("finest cells underflow the quadrature resolution")
        r, rho = self.r_rho()
        for m, x in enumerate(self.levels):
            h = np.diff(x)
            if np.max(h) > self.lam * np.min(h) * (1.0 + TOL):
                raise PartitionError(
                    f"condition (c): level {m} length ratio {np.max(h) / np.min(h):.6g} exceeds lambda={self.lam}"
                )
            if m == 0:
                continue
            coarse = self.levels[m - 1]
            pos = np.searchsorted(x, coarse - tol)
            if np.any(pos >= len(x)) or np.any(np.abs(x[np.minimum(pos, len(x) - 1)] - coarse) > tol):
                raise PartitionError(f"condition (b): level {m - 1} knots are not all level {m} knots")
            children = np.diff(pos)
            if np.any(children < 2) or np.any(children > self.m0):
                raise PartitionError(
                    f"condition (b): level {m - 1} cell has {children.min()}..{children.max()} children, "
                    f"allowed 2..{self.m0}"
                )
            parent = np.repeat(np.diff(coarse), children)
            ratio = h / parent
            if np.any(ratio < r * (1.0 - TOL)) or np.any(ratio > rho * (1.0 + TOL)):
                raise PartitionError(
                    f"r-rho: level {m} child/parent ratios in [{ratio.min():.6g}, {ratio.max():.6g}] "
                    f"leave [{r:.6g}, {rho:.6g}]"
                )

    def to_dict(self) -> Dict:
        return {
            "window": [self.window.lo, self.window.hi],
            "k": int(self.k),
            "lambda": float(self.lam),
            "m0": int(self.m0),
            "levels": [x.tolist() for x in self.levels],
        }

    def digest(self) -> str:
        """Stable content digest used to tie decomposition files to their partition."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: Dict) -> "MultilevelPartition":
        """
        Rebuild and re-validate a partition from its JSON form.

        The declared lambda and M_0 default to the values measured on the knots.
        """
        try:
            window = Interval(*map(float, data["window"]))
            k = int(data["k"])
            levels = [np.asarray(x, dtype=float) for x in data["levels"]]
        except (KeyError, TypeError, ValueError) as e:
            raise PartitionError(f"malformed partition data: {e}") from e
        lam = data.get("lambda")
        if lam is None:
            lam = max(1.0, max(float(np.max(np.diff(x)) / np.min(np.diff(x))) for x in levels if len(x) > 1))
        m0 = data.get("m0")
        if m0 is None:
            m0 = M0_BUILD
            for coarse, fine in zip(levels, levels[1:]):
                m0 = max(m0, int(np.max(np.diff(np.searchsorted(fine, coarse)))))
        return cls(window, tuple(levels), k, float(lam), int(m0))


def _refine(knots: np.ndarray, u: np.ndarray) -> np.ndarray:
    # Insert one knot per cell at relative position u.
    new = knots[:-1] + u * np.diff(knots)
    out = np.empty(2 * len(knots) - 1)
    out[0::2] = knots
    out[1::2] = new
    return out


def _check_build_args(window: Sequence[float], L: int, k: int) -> Interval:
    win = Interval(float(window[0]), float(window[1]))
    if win.length <= 0:
        raise PartitionError(f"window {tuple(win)} must have positive length")
    if L < 0:
        raise PartitionError(f"finest level L={L} must be >= 0")
    if k < 2:
        raise PartitionError(f"spline order k={k} must be >= 2")
    if 1.0 / ((2 * k + 1) * 2.0 ** L) < RESOLUTION:
        raise PartitionError(f"L={L} makes the finest cell underflow the quadrature resolution")
    return win


def build_dyadic(window: Sequence[float], L: int, k: int) -> MultilevelPartition:
    """
    Build the uniform dyadic partition with 2k+1 cells at level 0.

    Args:
        window (Sequence[float]): The window [a, b].
        L (int): Finest level.
        k (int): Spline order.

    Returns:
        MultilevelPartition: Level m has (2k+1)*2^m equal cells.
    """
    win = _check_build_args(window, L, k)
    levels = [np.linspace(win.lo, win.hi, 2 * k + 2)]
    for _ in range(L):
        levels.append(_refine(levels[-1], np.full(len(levels[-1]) - 1, 0.5)))
    logger.debug("Built dyadic partition: window=%s L=%d k=%d", tuple(win), L, k)
    return MultilevelPartition(win, tuple(levels), k, 1.0, M0_BUILD)


def build_perturbed(
    window: Sequence[float], L: int, k: int, jitter: float, seed: int
) -> MultilevelPartition:
    """
    Build a binary partition whose new knots are jittered around the cell midpoints.

    Each new knot sits at lo + u*|I| with u uniform in [1/2 - jitter, 1/2 + jitter].

    The declared lambda is the level-wide length ratio max |I| / min |I| measured on the
    knots, floored at r = (1/2 + jitter) / (1/2 - jitter). A level-m cell is |I_0| times m
    factors drawn from [1/2 - jitter, 1/2 + jitter], so lambda grows with depth and stays in
    [r, r^max(L, 1)]. The child/parent bounds of MultilevelPartition.r_rho loosen accordingly.

    Args:
        window (Sequence[float]): The window [a, b].
        L (int): Finest level.
        k (int): Spline order.
        jitter (float): Half-width of the admissible relative position, in [0, 1/4).
        seed (int): Seed of the pseudorandom generator.

    Returns:
        MultilevelPartition: Deterministic given the seed.
    """
    if not 0.0 <= jitter < 0.25:
        raise PartitionError(f"jitter={jitter} must lie in [0, 0.25) for the r-rho bounds to hold")
    win = _check_build_args(window, L, k)
    rng = np.random.default_rng(int(seed) % 2 ** 64)
    levels = [np.linspace(win.lo, win.hi, 2 * k + 2)]
    for _ in range(L):
        n = len(levels[-1]) - 1
        u = 0.5 + jitter * (2.0 * rng.random(n) - 1.0) if jitter > 0 else np.full(n, 0.5)
        levels.append(_refine(levels[-1], u))
    measured = max(float(np.max(np.diff(x)) / np.min(np.diff(x))) for x in levels)
    lam = max(1.0, measured, (0.5 + jitter) / (0.5 - jitter))
    logger.debug("Built perturbed partition: jitter=%g seed=%d lambda=%g", jitter, seed, lam)
    return MultilevelPartition(win, tuple(levels), k, lam, M0_BUILD)


def supports(partition: MultilevelPartition, m: int) -> List[SupportIndex]:
    """
    Enumerate the level-m supports Q = [x_{m,j}, x_{m,j+k}] inside the window.

    Args:
        partition (MultilevelPartition): The partition.
        m (int): Level, 0 <= m <= L.

    Returns:
        List[SupportIndex]: Supports in increasing j; there are ncells(m) - k + 1 of them.
    """
    n = partition.ncells(m)
    return [SupportIndex(m, j) for j in range(n - partition.k + 1)]


def support_interval(partition: MultilevelPartition, Q: SupportIndex) -> Interval:
    x = partition.knots(Q.m)
    if not 0 <= Q.j <= len(x) - 1 - partition.k:
        raise DomainError(f"support {Q} outside level {Q.m}")
    return Interval(x[Q.j], x[Q.j + partition.k])


def omega_neighborhood(partition: MultilevelPartition, cell: Cell) -> Interval:
    """
    Union of the level-m supports containing a cell, clipped to the window.

    For I = [x_{m,j}, x_{m,j+1}] this is [x_{m,j+1-k}, x_{m,j+k}].
    """
    x = partition.knots(cell.m)
    n = len(x) - 1
    if not 0 <= cell.j < n:
        raise DomainError(f"cell {cell} outside level {cell.m}")
    k = partition.k
    return Interval(x[max(cell.j + 1 - k, 0)], x[min(cell.j + k, n)])


def omega_cell_ranges(partition: MultilevelPartition, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """First and one-past-last level-m cell index of every Omega_I at level m."""
    n = partition.ncells(m)
    j = np.arange(n)
    return np.maximum(j + 1 - partition.k, 0), np.minimum(j + partition.k, n)


def interval_level(partition: MultilevelPartition, J: Interval) -> int:
    """
    Largest level having at most one knot interior to J, clamped to [0, L].
    """
    J = Interval(*J)
    tol = TOL * partition.window.length
    if J.length <= 0 or not partition.window.contains(J, tol):
        raise DomainError(f"interval {tuple(J)} must have positive length inside the window")
    level = 0
    for m, x in enumerate(partition.levels):
        interior = np.count_nonzero((x > J.lo + tol) & (x < J.hi - tol))
        if interior <= 1:
            level = m
        else:
            break
    return level


@dataclass(frozen=True, eq=False)
class NestedStructure:
    """
    Forest of open intervals U_xi indexed by a multilevel set.

    Nodes are ordered by level, then by position. The parent of a node is the node at the
    nearest coarser level whose interval contains it, or -1 for roots.

    Attributes:
        level (np.ndarray): Level of every node.
        lo (np.ndarray): Left endpoints of U_xi.
        hi (np.ndarray): Right endpoints of U_xi.
        parent (np.ndarray): Parent index or -1.
        labels (Tuple[SupportIndex, ...]): Support behind every node, when built from a partition.
    """

    level: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    parent: np.ndarray
    labels: Tuple[SupportIndex, ...] = field(default=())

    @property
    def size(self) -> int:
        return len(self.level)

    @property
    def lengths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def depth(self) -> int:
        return int(self.level.max()) + 1 if self.size else 0

    def children(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.parent == i)

    def roots(self) -> np.ndarray:
        return np.flatnonzero(self.parent < 0)

    def index_of(self, label: SupportIndex) -> int:
        return self._label_index()[label]

    def _label_index(self) -> Dict[SupportIndex, int]:
        cache = self.__dict__.get("_labels_cache")
        if cache is None:
            cache = {lab: i for i, lab in enumerate(self.labels)}
            object.__setattr__(self, "_labels_cache", cache)
        return cache

    def level_measure(self, m: int) -> float:
        return float(np.sum(self.lengths[self.level == m]))

    def check_conditions(self, lam: Optional[float] = None) -> Dict[str, bool]:
        """
        Evaluate the nested-structure conditions on the (finite) index set.

        Returns:
            Dict[str, bool]: Keys 'a' (disjoint within a level), 'b' (nested or disjoint),
            'c' (parent contains child, unique), 'd' (lambda-comparable), 'e' (>= 2 children
            below the finest level).
        """
        tol = TOL * float(np.max(self.hi) - np.min(self.lo))
        result = {}
        ok_a = True
        for m in range(self.depth):
            idx = np.flatnonzero(self.level == m)
            order = idx[np.argsort(self.lo[idx])]
            ok_a &= bool(np.all(self.lo[order][1:] >= self.hi[order][:-1] - tol))
        result["a"] = ok_a

        ok_b = True
        for i in range(self.size):
            coarser = self.level < self.level[i]
            overlap = (self.lo < self.hi[i] - tol) & (self.hi > self.lo[i] + tol) & coarser
            inside = (self.lo <= self.lo[i] + tol) & (self.hi >= self.hi[i] - tol)
            ok_b &= bool(np.all(inside[overlap]))
        result["b"] = ok_b

        has = self.parent >= 0
        p = self.parent[has]
        result["c"] = bool(
            np.all(self.lo[p] <= self.lo[has] + tol)
            and np.all(self.hi[p] >= self.hi[has] - tol)
            and np.all(self.level[p] < self.level[has])
        )

        lam_eff = lam if lam is not None else np.inf
        ok_d = True
        for m in range(self.depth):
            h = self.lengths[self.level == m]
            ok_d &= bool(np.max(h) <= lam_eff * np.min(h) * (1.0 + TOL))
        result["d"] = ok_d

        counts = np.bincount(p, minlength=self.size) if len(p) else np.zeros(self.size, dtype=int)
        not_finest = self.level < self.depth - 1
        result["e"] = bool(np.all(counts[not_finest] >= 2))
        return result

    @classmethod
    def dyadic_tree(cls, depth: int, interval: Sequence[float] = (0.0, 1.0)) -> "NestedStructure":
        """
        Complete binary tree of dyadic subintervals with the given number of levels.

        A depth-4 tree has 1 + 2 + 4 + 8 = 15 nodes.
        """
        if depth < 1:
            raise DomainError(f"depth={depth} must be >= 1")
        a, b = float(interval[0]), float(interval[1])
        level, lo, hi, parent = [], [], [], []
        offset = 0
        for m in range(depth):
            n = 2 ** m
            edges = np.linspace(a, b, n + 1)
            level.extend([m] * n)
            lo.extend(edges[:-1])
            hi.extend(edges[1:])
            parent.extend([-1] * n if m == 0 else [offset - n // 2 + j // 2 for j in range(n)])
            offset += n
        return cls(np.array(level), np.array(lo), np.array(hi), np.array(parent))


def nested_structure(partition: MultilevelPartition) -> NestedStructure:
    """
    Nested structure of first-cell intervals U_Q = (x_{m,j}, x_{m,j+1}) over all supports.

    Args:
        partition (MultilevelPartition): The partition.

    Returns:
        NestedStructure: One node per support, labelled by its SupportIndex.
    """
    k = partition.k
    level, lo, hi, parent, labels = [], [], [], [], []
    offsets = []
    offset = 0
    for m in range(partition.L + 1):
        x = partition.knots(m)
        count = len(x) - k
        offsets.append(offset)
        mids = 0.5 * (x[:count] + x[1 : count + 1])
        par = np.full(count, -1)
        unresolved = np.ones(count, dtype=bool)
        for c in range(m - 1, -1, -1):
            xc = partition.knots(c)
            cell = np.searchsorted(xc, mids, side="right") - 1
            hit = unresolved & (cell <= len(xc) - 1 - k)
            par[hit] = offsets[c] + cell[hit]
            unresolved &= ~hit
            if not unresolved.any():
                break
        level.extend([m] * count)
        lo.extend(x[:count])
        hi.extend(x[1 : count + 1])
        parent.extend(par.tolist())
        labels.extend(SupportIndex(m, j) for j in range(count))
        offset += count
    logger.debug("Nested structure: %d nodes over %d levels", offset, partition.L + 1)
    return NestedStructure(
        np.array(level), np.array(lo), np.array(hi), np.array(parent), tuple(labels)
    )


def load_partition(path: str) -> MultilevelPartition:
    """
    Load and re-validate a partition from a JSON file.

    Raises:
        PartitionError: If the file is malformed or violates a condition.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise PartitionError(f"cannot read partition file {path}: {e}") from e
    return MultilevelPartition.from_dict(data)


def save_partition(partition: MultilevelPartition, path: str) -> None:
    """Write a partition as JSON, replacing the target atomically."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(partition.to_dict(), f, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
    logger.debug("Saved partition (L=%d, k=%d) to %s", partition.L, partition.k, path)
