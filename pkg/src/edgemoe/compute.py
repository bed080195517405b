"""Expert-side cost model for a token batch at a given reasoning depth."""

from __future__ import annotations

from dataclasses import dataclass

from .core import DeviceProfile, ExpertProfile, SystemConfig


@dataclass(frozen=True, slots=True)
class ForwardCost:
    flops: float
    output_bits: float
    passes: int


def forward_cost(tokens: int, d: int, expert: ExpertProfile, cfg: SystemConfig) -> ForwardCost:
    """Each reasoning step is one more full forward pass over the batch and
    adds ``cot_payload_factor`` of the base payload to the returned output."""
    if tokens < 0 or d < 0:
        raise ValueError("tokens and depth must be nonnegative")
    return ForwardCost(
        flops=tokens * expert.flops_per_token * (1 + d),
        output_bits=tokens * cfg.bits_per_token * (1 + cfg.cot_payload_factor * d),
        passes=1 + d,
    )


def _execute(cost: ForwardCost, flops_per_s: float, kappa: float) -> tuple[float, float]:
    return cost.flops / flops_per_s, kappa * cost.flops


def execute_on_device(cost: ForwardCost, device: DeviceProfile, cfg: SystemConfig) -> tuple[float, float]:
    """(latency s, energy J). Over-budget work is not rejected here; it simply
    runs past the slot and fails the deadline check downstream."""
    return _execute(cost, device.tflops, cfg.kappa_device)


def execute_at_bs(cost: ForwardCost, cfg: SystemConfig) -> tuple[float, float]:
    return _execute(cost, cfg.bs_tflops, cfg.kappa_bs)


def dense_expert(cfg: SystemConfig) -> ExpertProfile:
    """The full model hosted at the base station, as an expert profile."""
    return ExpertProfile(cfg.flops_per_token_dense, 0.0)
