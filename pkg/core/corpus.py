# ************************************************************
#  core/corpus.py
# ************************************************************

"""
Builtin function corpus.

Named test functions resolvable by string id, plus CSV ingestion. Apart from
const1 and the smoothed indicator ramps, every entry vanishes outside [0, 1].
"""

import logging
import os
import re
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from core.bspline import spline_from_terms
from core.errors import FunctionError
from core.funcspace import CallableFunc, Func, PiecewiseFunc, PiecewisePoly, load_csv
from core.partition import Interval, MultilevelPartition

logger = logging.getLogger(__name__)

UNIT = Interval(0.0, 1.0)


@dataclass(frozen=True)
class CorpusEntry:
    """
    Builtin function description.

    Attributes:
        id (str): Base id; a parameter may follow after an underscore.
        default (Optional[float]): Parameter used when the id carries none.
        alpha (Optional[float]): A smoothness for which the Besov norm is finite, None when borderline.
        note (str): Provenance.
    """

    id: str
    default: Optional[float]
    alpha: Optional[float]
    note: str


def _bump_values(x: np.ndarray) -> np.ndarray:
    t = 2.0 * x - 1.0
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def const1(window: Interval) -> Func:
    return PiecewiseFunc(PiecewisePoly([window.lo, window.hi], [[1.0]]), "const1")


def bump() -> Func:
    """C-infinity bump on (0, 1) with peak value 1 at 1/2."""
    return CallableFunc(_bump_values, "bump", UNIT)


def cusp(gamma: float) -> Func:
    """|x - 1/2|^gamma times the bump."""
    name = "cusp05" if gamma == 0.5 else "cusp025" if gamma == 0.25 else f"cusp_{gamma:g}"
    return CallableFunc(lambda x: np.abs(x - 0.5) ** gamma * _bump_values(x), name, UNIT, [0.5])


def step() -> Func:
    """Indicator of [0, 1/2)."""
    return PiecewiseFunc(PiecewisePoly([0.0, 0.5, 1.0], [[1.0, 0.0]]), "step", UNIT)


def smoothstep(eps: float) -> Func:
    """
    1 on [0, 1] with linear ramps of width eps on both sides, 0 beyond.
    """
    if not eps > 0:
        raise FunctionError(f"smoothstep width eps={eps} must be > 0")
    pp = PiecewisePoly([-eps, 0.0, 1.0, 1.0 + eps], [[1.0 / eps, 0.0, -1.0 / eps], [0.0, 1.0, 1.0]])
    return PiecewiseFunc(pp, f"smoothstep_{eps:g}")


def sawtooth(j: int) -> Func:
    """
    Continuous triangle wave on [0, 1] with 2^j teeth of height 1.
    """
    j = int(j)
    if j < 0:
        raise FunctionError(f"sawtooth level j={j} must be >= 0")
    teeth = 2 ** j
    x = np.linspace(0.0, 1.0, 2 * teeth + 1)
    slope = 2.0 * teeth * np.tile([1.0, -1.0], teeth)
    start = np.tile([0.0, 1.0], teeth)
    return PiecewiseFunc(PiecewisePoly(x, np.vstack([slope, start])), f"sawtooth_{j}", UNIT)


def logsing() -> Func:
    """log|x - 1/2| times the bump; the value at 1/2 is set to 0."""

    def values(x: np.ndarray) -> np.ndarray:
        d = np.abs(x - 0.5)
        out = np.zeros_like(x)
        ok = d > 0
        out[ok] = np.log(d[ok]) * _bump_values(x[ok])
        return out

    return CallableFunc(values, "logsing", UNIT, [0.5])


def randspline(n: int, partition: MultilevelPartition, seed: int) -> Func:
    """
    Seeded random element of Sigma_n: n supports inside [0, 1] drawn over all levels, normal coefficients.
    """
    n = int(n)
    if n < 1:
        raise FunctionError(f"randspline size n={n} must be >= 1")
    k = partition.k
    labels = []
    for m in range(partition.L + 1):
        x = partition.knots(m)
        j = np.arange(partition.ncells(m) - k + 1)
        inside = (x[j] >= UNIT.lo - 1e-12) & (x[j + k] <= UNIT.hi + 1e-12)
        labels.extend((m, int(i)) for i in j[inside])
    if len(labels) < n:
        raise FunctionError(f"randspline_{n}: only {len(labels)} supports fit inside [0, 1]")
    rng = np.random.default_rng(int(seed) % 2 ** 64)
    pick = rng.choice(len(labels), size=n, replace=False)
    coefs = rng.standard_normal(n)
    terms = [(labels[i][0], labels[i][1], float(c)) for i, c in zip(pick, coefs)]
    return PiecewiseFunc(spline_from_terms(partition, terms), f"randspline_{n}", UNIT)


ENTRIES: Dict[str, CorpusEntry] = {
    "const1": CorpusEntry("const1", None, None, "constant 1 on the whole window; lies in every polynomial space"),
    "bump": CorpusEntry("bump", None, 1.0, "C-infinity, compactly supported in (0, 1)"),
    "cusp05": CorpusEntry("cusp05", None, 0.5, "|x - 1/2|^(1/2) times bump"),
    "cusp025": CorpusEntry("cusp025", None, 0.5, "|x - 1/2|^(1/4) times bump"),
    "step": CorpusEntry("step", None, None, "indicator of [0, 1/2); in BMO, borderline for every Besov space"),
    "smoothstep": CorpusEntry("smoothstep", 0.125, 1.0, "smoothed indicator with ramps of width eps"),
    "sawtooth": CorpusEntry("sawtooth", 3, 1.0, "continuous triangle wave with 2^j teeth"),
    "randspline": CorpusEntry("randspline", 8, 1.0, "seeded random n-term spline"),
    "logsing": CorpusEntry("logsing", None, None, "log|x - 1/2| times bump; unbounded but in BMO"),
}

_ID = re.compile(r"^(?P<base>[a-z]+\d*?)(?:_(?P<param>[0-9.eE+-]+|eps|j|n))?$")


def available() -> str:
    return ", ".join(["const1", "bump", "cusp05", "cusp025", "step", "smoothstep_eps", "sawtooth_j", "randspline_n", "logsing"])


def entry(fn_id: str) -> CorpusEntry:
    match = _ID.match(fn_id)
    if match is None or match.group("base") not in ENTRIES:
        raise FunctionError(f"unknown function id {fn_id!r}; available: {available()}")
    return ENTRIES[match.group("base")]


def resolve(fn_id: str, partition: MultilevelPartition, seed: int = 0) -> Func:
    """
    Build a corpus function, or ingest a CSV file when the id names one.

    Args:
        fn_id (str): Builtin id such as 'cusp05', 'sawtooth_4', 'smoothstep_0.0625', or a CSV path.
        partition (MultilevelPartition): Partition, for window-wide and spline entries.
        seed (int): Seed for randomized entries.

    Raises:
        FunctionError: For an unknown id or a malformed CSV file.
    """
    if fn_id.endswith(".csv") or os.path.isfile(fn_id):
        return load_csv(fn_id)
    e = entry(fn_id)
    raw = _ID.match(fn_id).group("param")
    param = e.default if raw in (None, "eps", "j", "n") else float(raw)
    builders: Dict[str, Callable[[], Func]] = {
        "const1": lambda: const1(partition.window),
        "bump": bump,
        "cusp05": lambda: cusp(0.5),
        "cusp025": lambda: cusp(0.25),
        "step": step,
        "smoothstep": lambda: smoothstep(param),
        "sawtooth": lambda: sawtooth(int(param)),
        "randspline": lambda: randspline(int(param), partition, seed),
        "logsing": logsing,
    }
    f = builders[e.id]()
    logger.debug("Resolved %s as %s", fn_id, f.name)
    return f
