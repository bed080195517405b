"""Closed-form reasoning-quality model.

The residual error of a task starts at ``1 - (q_hi - q_span * complexity)``
and shrinks geometrically by ``rho_k`` per extra expert and ``rho_d`` per
reasoning step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import SystemConfig


@dataclass(frozen=True, slots=True)
class QualityVerdict:
    score: float
    threshold: float
    satisfied: bool


def base_residual(complexity: float, cfg: SystemConfig) -> float:
    return 1.0 - (cfg.q_hi - cfg.q_span * complexity)


def quality_score(complexity: float, k: int, d: int, cfg: SystemConfig) -> float:
    if k < 1 or d < 0:
        raise ValueError("need k >= 1 and d >= 0")
    resid = base_residual(complexity, cfg) * cfg.rho_k ** (k - 1) * cfg.rho_d ** d
    return min(1.0, max(0.0, 1.0 - resid))


def satisfied(score: float, cfg: SystemConfig) -> QualityVerdict:
    return QualityVerdict(score, cfg.theta, score >= cfg.theta)


def min_depth(complexity: float, k: int, cfg: SystemConfig) -> int:
    """Smallest depth whose score reaches ``theta``, from the log bound.

    Solves ``r0 * rho_k**(k-1) * rho_d**d <= 1 - theta`` for integer d. A
    1e-9 allowance keeps floating error just above an integer from costing
    an extra step.
    """
    resid = base_residual(complexity, cfg) * cfg.rho_k ** (k - 1)
    slack = 1.0 - cfg.theta
    if resid <= slack:
        return 0
    if slack <= 0:
        raise ValueError("theta = 1 is unreachable at any finite depth")
    x = math.log(slack / resid) / math.log(cfg.rho_d)
    return max(0, math.ceil(x - 1e-9))


def band_upper_complexity(band: int, n_bands: int) -> float:
    """Hardest complexity in a band (its upper edge)."""
    return (band + 1) / n_bands
