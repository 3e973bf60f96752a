"""Configuration for lanczos-kn runs."""

import os
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

logger = logging.getLogger('kn.config')

load_dotenv()

# Default directory for CSV/JSON outputs
OUTPUT_DIR = os.getenv("KN_OUTPUT_DIR", "results")

# Worker threads for per-shift evaluations
THREADS = int(os.getenv("KN_THREADS", "1"))

LOG_LEVEL = os.getenv("KN_LOG_LEVEL", "INFO").upper()

# Largest nnz factorized directly by the reference solver
DIRECT_SOLVE_CAP = int(float(os.getenv("KN_DIRECT_SOLVE_CAP", "2e5")))

# Record wall-clock columns and run timestamps; off keeps reruns byte-identical
RECORD_TIMING = os.getenv("KN_RECORD_TIMING", "0").lower() in ("1", "true", "yes")

VARIANTS = ("gauss", "radau", "average", "kn", "extended_kn")

logger.debug(
    f"settings: output_dir={OUTPUT_DIR}, threads={THREADS}, direct_cap={DIRECT_SOLVE_CAP}, "
    f"timing={'on' if RECORD_TIMING else 'off'}"
)


class OptimizePolicy(BaseModel):
    """Re-optimize phi every `every` checkpoints and average over a window."""
    every: int = Field(default=1, ge=1)
    average_window: int = Field(default=5, ge=1)
    init: float = Field(default=1.0, gt=0.0)
    n_pts: int = Field(default=128, ge=4)


class PhiPolicy(BaseModel):
    """Either a fixed phi or an optimization policy."""
    fixed: Optional[float] = Field(default=None, gt=0.0)
    optimize: Optional[OptimizePolicy] = None

    @model_validator(mode='after')
    def _exactly_one(self):
        if (self.fixed is None) == (self.optimize is None):
            raise ValueError("phi_policy needs exactly one of 'fixed' or 'optimize'")
        return self


class SweepSpec(BaseModel):
    """Log-spaced shift grid; real shifts 10^a..10^b and imaginary shifts i*10^a..i*10^b."""
    real_decades: Optional[Tuple[float, float]] = (-4.0, -2.0)
    imag_decades: Optional[Tuple[float, float]] = (-4.0, -2.0)
    points: int = Field(default=6, ge=1)


class CheatGrid(BaseModel):
    lo: float = Field(default=1e-3, gt=0.0)
    hi: float = Field(default=1e3, gt=0.0)
    points: int = Field(default=50, ge=2)


class StateSpec(BaseModel):
    """Time-harmonic snapshot settings; line is a list of node rows (defaults to the column through the first source)."""
    omega: float = 0.3
    epsilon: Optional[float] = Field(default=None, gt=0.0)
    times: List[float] = Field(default_factory=lambda: [0.0])
    line: Optional[List[int]] = None
    variants: List[str] = Field(default_factory=lambda: ["gauss", "radau", "kn"])

    def damping(self) -> float:
        return self.epsilon if self.epsilon is not None else abs(self.omega) / 200.0


class RunConfig(BaseModel):
    """A run configuration as read from --config JSON."""
    problem: Optional[Union[str, Dict]] = None
    m_max: int = Field(default=40, ge=1)
    m_stride: int = Field(default=10, ge=1)
    m: Optional[int] = Field(default=None, ge=1)
    shifts: List[Tuple[float, float]] = Field(default_factory=lambda: [(3e-4, 0.0), (0.0, 4e-5)])
    variants: List[str] = Field(default_factory=lambda: ["gauss", "radau", "average"])
    phi_policy: Optional[PhiPolicy] = None
    xi: Optional[float] = Field(default=None, gt=0.0)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    validation_shifts: Optional[List[Tuple[float, float]]] = None
    cheat_grid: CheatGrid = Field(default_factory=CheatGrid)
    state: StateSpec = Field(default_factory=StateSpec)
    reorth: bool = True
    seed: int = 0
    threads: int = Field(default=THREADS, ge=1)
    output_dir: str = OUTPUT_DIR
    record_timing: bool = RECORD_TIMING

    @field_validator('variants')
    @classmethod
    def _known_variants(cls, value: List[str]) -> List[str]:
        unknown = [v for v in value if v not in VARIANTS]
        if unknown:
            raise ValueError(f"unknown variants {unknown}; choose from {list(VARIANTS)}")
        if not value:
            raise ValueError("variants must not be empty")
        return value

    @field_validator('shifts')
    @classmethod
    def _nonempty_shifts(cls, value):
        if not value:
            raise ValueError("shifts must not be empty")
        return value

    @model_validator(mode='after')
    def _kn_needs_phi(self):
        if any(v in ("kn", "extended_kn") for v in self.variants) and self.phi_policy is None:
            raise ValueError("kn variants need a phi_policy")
        return self

    @property
    def fixed_m(self) -> int:
        return self.m if self.m is not None else self.m_max

    def checkpoints(self) -> List[int]:
        """m = stride, 2*stride, ..., m_max (m_max always included)."""
        points = list(range(self.m_stride, self.m_max + 1, self.m_stride))
        if not points or points[-1] != self.m_max:
            points.append(self.m_max)
        return points


def load_run_config(path: Optional[Union[str, Path]], overrides: Optional[Dict] = None) -> RunConfig:
    """
    Read and validate a run configuration.

    Args:
        path: JSON file, or None for the defaults
        overrides: Field values taking precedence over the file (CLI flags)

    Returns:
        Validated RunConfig
    """
    data: Dict = {}
    if path is not None:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def save_run_config(config: RunConfig, output_dir: Union[str, Path]) -> Path:
    """Save the resolved configuration next to the outputs."""
    path = Path(output_dir) / "config.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(config.model_dump(mode='json'), f, indent=2, sort_keys=True)
        f.write('\n')
    return path
