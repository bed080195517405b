"""Scripted comparison schemes and the scheme registry."""

from __future__ import annotations

import enum
from typing import Callable

import numpy as np

from .core import SystemConfig
from .env import Action

Policy = Callable[[np.ndarray], Action]


class SchemeId(str, enum.Enum):
    DENSE_NOCOT = "dense_nocot"
    MOE_NOCOT = "moe_nocot"
    MOE_FIXED_COT = "moe_fixed_cot"
    MOE_DYNAMIC = "moe_dynamic"

    def __str__(self) -> str:
        return self.value


BASELINE_K = 2
DEFAULT_D_FIXED = 4


def _k_index(cfg: SystemConfig, k: int) -> int:
    try:
        return cfg.k_choices.index(k)
    except ValueError:
        raise ValueError(f"baseline needs k={k} in k_choices {cfg.k_choices}") from None


def _max_power_index(cfg: SystemConfig) -> int:
    return max(range(len(cfg.power_levels)), key=lambda i: cfg.power_levels[i])


def dense_policy(obs: np.ndarray, cfg: SystemConfig) -> Action:
    return Action(at_bs=True, d=0)


def moe_nocot_policy(obs: np.ndarray, cfg: SystemConfig) -> Action:
    return Action(k_index=_k_index(cfg, BASELINE_K), power_index=_max_power_index(cfg), d=0)


def fixed_cot_policy(obs: np.ndarray, cfg: SystemConfig, d_fixed: int = DEFAULT_D_FIXED) -> Action:
    if not 0 <= d_fixed <= cfg.d_max:
        raise ValueError(f"d_fixed={d_fixed} outside 0..{cfg.d_max}")
    return Action(k_index=_k_index(cfg, BASELINE_K), power_index=_max_power_index(cfg), d=d_fixed)


def make_policy(scheme: SchemeId | str, cfg: SystemConfig, *, d_fixed: int = DEFAULT_D_FIXED,
                net=None) -> Policy:
    """Bind a scheme to ``cfg``; the dynamic scheme needs a trained ``net``."""
    scheme = SchemeId(scheme)
    if scheme is SchemeId.DENSE_NOCOT:
        return lambda obs: dense_policy(obs, cfg)
    if scheme is SchemeId.MOE_NOCOT:
        action = moe_nocot_policy(None, cfg)
        return lambda obs: action
    if scheme is SchemeId.MOE_FIXED_COT:
        action = fixed_cot_policy(None, cfg, d_fixed)
        return lambda obs: action
    if net is None:
        raise ValueError("moe_dynamic needs a trained policy network")
    from .dppo.net import greedy_action

    return lambda obs: greedy_action(net, obs)
