"""Actor-critic MLP with three categorical heads, in plain numpy.

Shared trunk: obs -> tanh(64) -> tanh(64). Heads: logits over the k menu,
the power menu and depths 0..d_max, plus a scalar value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import RngStream
from ..env import Action

HEADS = ("k", "power", "depth")


@dataclass
class PolicyNet:
    obs_width: int
    head_widths: dict[str, int]
    hidden: tuple[int, ...] = (64, 64)
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "PolicyNet":
        return PolicyNet(self.obs_width, dict(self.head_widths), self.hidden,
                         {k: v.copy() for k, v in self.params.items()})

    def param_names(self) -> list[str]:
        return list(self.params)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


def init_net(obs_width: int, head_widths: dict[str, int], rng: RngStream,
             hidden: tuple[int, ...] = (64, 64)) -> PolicyNet:
    """Scaled-normal trunk; policy heads start near uniform (x0.01)."""
    g = rng.gen
    params: dict[str, np.ndarray] = {}
    fan_in = obs_width
    for i, width in enumerate(hidden):
        params[f"W{i}"] = g.standard_normal((fan_in, width)) / np.sqrt(fan_in)
        params[f"b{i}"] = np.zeros(width)
        fan_in = width
    for name in HEADS:
        params[f"W_{name}"] = 0.01 * g.standard_normal((fan_in, head_widths[name])) / np.sqrt(fan_in)
        params[f"b_{name}"] = np.zeros(head_widths[name])
    params["W_value"] = g.standard_normal((fan_in, 1)) / np.sqrt(fan_in)
    params["b_value"] = np.zeros(1)
    return PolicyNet(obs_width, {h: head_widths[h] for h in HEADS}, tuple(hidden), params)


def head_widths_for(cfg) -> dict[str, int]:
    return {"k": len(cfg.k_choices), "power": len(cfg.power_levels), "depth": cfg.d_max + 1}


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _trunk(net: PolicyNet, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    for i in range(len(net.hidden)):
        acts.append(np.tanh(acts[-1] @ net.params[f"W{i}"] + net.params[f"b{i}"]))
    return acts


def forward_batch(net: PolicyNet, x: np.ndarray):
    """Returns (trunk activations, {head: log-probs}, values) for a batch."""
    acts = _trunk(net, x)
    h = acts[-1]
    logp = {name: _log_softmax(h @ net.params[f"W_{name}"] + net.params[f"b_{name}"]) for name in HEADS}
    value = (h @ net.params["W_value"] + net.params["b_value"])[:, 0]
    return acts, logp, value


def net_forward(net: PolicyNet, obs: np.ndarray) -> tuple[dict[str, np.ndarray], float]:
    """Head distributions and value for a single observation."""
    if obs.shape[-1] != net.obs_width:
        raise ValueError(f"observation width {obs.shape[-1]} != network input {net.obs_width}")
    _, logp, value = forward_batch(net, obs[None, :])
    return {name: np.exp(lp[0]) for name, lp in logp.items()}, float(value[0])


def sample_action(net: PolicyNet, obs: np.ndarray, rng: RngStream) -> tuple[np.ndarray, float, float]:
    """Draw one index per head; returns (indices, joint log-prob, value)."""
    _, logp, value = forward_batch(net, obs[None, :])
    idx = np.empty(len(HEADS), dtype=np.int64)
    total = 0.0
    for j, name in enumerate(HEADS):
        lp = logp[name][0]
        p = np.exp(lp)
        # inverse-CDF draw keeps exactly one uniform per head
        i = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        i = min(i, len(p) - 1)
        idx[j] = i
        total += lp[i]
    return idx, total, float(value[0])


def indices_to_action(idx) -> Action:
    return Action(k_index=int(idx[0]), power_index=int(idx[1]), d=int(idx[2]))


def greedy_action(net: PolicyNet, obs: np.ndarray) -> Action:
    _, logp, _ = forward_batch(net, obs[None, :])
    return indices_to_action([int(np.argmax(logp[name][0])) for name in HEADS])
