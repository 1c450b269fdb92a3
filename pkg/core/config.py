# ************************************************************
#  core/config.py
# ************************************************************

"""
Configuration module for the BMO spline toolkit.

This module pulls defaults from the environment (a .env file is honoured) and
defines the validated run configuration shared by every command.
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.errors import ConfigError
from core.partition import MultilevelPartition, build_dyadic, build_perturbed

load_dotenv()

logger = logging.getLogger(__name__)

SEED = os.getenv("BMO_SPLINES_SEED", "")
LOG_LEVEL = os.getenv("BMO_SPLINES_LOG_LEVEL", "INFO")
OUTPUT_DIR = os.getenv("BMO_SPLINES_OUTPUT_DIR", "results")

CONSTANTS_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "constants.json")
# Fields that do not change any computed number.
UNHASHED = {"output_dir", "n_jobs"}


class Config(BaseModel):
    """
    Validated run configuration.

    Attributes:
        window (Tuple[float, float]): Window [a, b].
        k (int): Spline order, 2..4.
        L (int): Finest level.
        q (float): Exponent of the local approximation errors.
        alpha (List[float]): Smoothness parameters; tau = 1/alpha.
        seed (int): Seed for every random draw.
        n_grid (List[int]): Strictly increasing term counts.
        output_dir (str): Directory for result files.
        partition (str): 'dyadic' or 'perturbed'.
        jitter (float): Knot jitter of perturbed partitions, in [0, 1/4).
        gauss_order (int): Gauss nodes per quadrature cell.
        n_jobs (int): Worker processes for independent trials.
        trials (int): Random trials per n in the Bernstein experiment.
        eps_grid (List[float]): Ramp widths of the counterexample.
        depth (int): Depth of the dyadic trees in the sequence-space benchmark.
        bmo_q (float): Exponent of the BMO estimator used for residuals.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    window: Tuple[float, float] = (-1.0, 2.0)
    k: int = 2
    L: int = 10
    q: float = 2.0
    alpha: List[float] = Field(default_factory=lambda: [0.5, 1.0])
    seed: int = 0
    n_grid: List[int] = Field(default_factory=lambda: [4, 8, 16, 32, 64, 128, 256])
    output_dir: str = OUTPUT_DIR
    partition: Literal["dyadic", "perturbed"] = "dyadic"
    jitter: float = 0.0
    gauss_order: int = 4
    n_jobs: int = 1
    trials: int = 20
    eps_grid: List[float] = Field(default_factory=lambda: [2.0 ** -e for e in range(3, 10)])
    depth: int = 4
    bmo_q: float = 1.0

    @field_validator("window")
    @classmethod
    def _window(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if not v[1] > v[0]:
            raise ValueError(f"window {v} must have positive length")
        return v

    @field_validator("k")
    @classmethod
    def _k(cls, v: int) -> int:
        if not 2 <= v <= 4:
            raise ValueError(f"k={v} must lie in [2, 4]")
        return v

    @field_validator("L", "seed", "depth")
    @classmethod
    def _nonnegative(cls, v: int) -> int:
        if v < 0:
            raise ValueError(f"{v} must be >= 0")
        return v

    @field_validator("q", "bmo_q")
    @classmethod
    def _q(cls, v: float) -> float:
        if v < 1:
            raise ValueError(f"q={v} must be >= 1")
        return v

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v: List[float]) -> List[float]:
        if not v or any(a <= 0 for a in v):
            raise ValueError(f"alpha values {v} must be > 0")
        return v

    @field_validator("n_grid")
    @classmethod
    def _grid(cls, v: List[int]) -> List[int]:
        if not v or v[0] < 1 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"n_grid {v} must be strictly increasing positive integers")
        return v

    @field_validator("jitter")
    @classmethod
    def _jitter(cls, v: float) -> float:
        if not 0.0 <= v < 0.25:
            raise ValueError(f"jitter={v} must lie in [0, 0.25)")
        return v

    @field_validator("gauss_order", "n_jobs", "trials")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"{v} must be >= 1")
        return v

    @field_validator("eps_grid")
    @classmethod
    def _eps(cls, v: List[float]) -> List[float]:
        if len(v) < 2 or any(e <= 0 for e in v):
            raise ValueError(f"eps_grid {v} needs at least two positive widths")
        return v

    @model_validator(mode="after")
    def _resolution(self) -> "Config":
        if 1.0 / ((2 * self.k + 1) * 2.0 ** self.L) < 1e-8:
            raise ValueError(f"L={self.L} makes the finest cell underflow the quadrature resolution")
        return self

    def build_partition(self) -> MultilevelPartition:
        if self.partition == "dyadic":
            return build_dyadic(self.window, self.L, self.k)
        return build_perturbed(self.window, self.L, self.k, self.jitter, self.seed)

    def config_hash(self) -> str:
        """First 16 hex digits of the SHA-256 of the canonical JSON of the result-affecting fields."""
        text = json.dumps(self.model_dump(mode="json", exclude=UNHASHED), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> Config:
    """
    Merge defaults, an optional JSON file, BMO_SPLINES_SEED and explicit overrides, in that order.

    Raises:
        ConfigError: If the file cannot be read or the merged values are invalid.
    """
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data.update(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
    seed = os.getenv("BMO_SPLINES_SEED", SEED)
    if seed:
        try:
            data["seed"] = int(seed)
        except ValueError as e:
            raise ConfigError(f"BMO_SPLINES_SEED={seed!r} is not an integer") from e
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        config = Config(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e.errors()[0]['loc']} {e.errors()[0]['msg']}") from e
    logger.debug("Loaded config %s (hash %s)", path or "<defaults>", config.config_hash())
    return config


def load_constants(path: str = CONSTANTS_PATH) -> Dict[str, Any]:
    """Frozen equivalence constants, versioned."""
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
