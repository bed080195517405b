"""Clipped-surrogate PPO loss with exact gradients, GAE, and Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import HEADS, PolicyNet, forward_batch


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    workers: int = 4
    horizon: int = 256
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    lr: float = 3e-4
    iterations: int = 300
    checkpoint_every: int = 50
    eval_seeds: tuple[int, ...] = (101, 102, 103)
    worker_seeds: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip epsilon must be > 0")
        if self.workers < 1 or self.horizon < 1 or self.minibatch < 1 or self.epochs < 1:
            raise ValueError("workers, horizon, minibatch and epochs must be >= 1")
        if self.worker_seeds is not None and len(self.worker_seeds) != self.workers:
            raise ValueError("need one worker seed per worker")


@dataclass
class Batch:
    obs: np.ndarray          # (B, obs_width)
    actions: np.ndarray      # (B, 3) head indices
    old_logp: np.ndarray     # (B,)
    advantages: np.ndarray   # (B,)
    returns: np.ndarray      # (B,)

    def __len__(self) -> int:
        return len(self.old_logp)

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(self.obs[idx], self.actions[idx], self.old_logp[idx],
                     self.advantages[idx], self.returns[idx])


def gae(rewards, values, bootstrap: float, gamma: float, lam: float, dones=None):
    """Generalized advantage estimates and value targets.

    ``dones[t]`` marks that the episode ended after step t, cutting both the
    bootstrap and the advantage recursion there.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values differ in length")
    T = len(rewards)
    dones = np.zeros(T, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    adv = np.zeros(T)
    running = 0.0
    next_value = bootstrap
    for t in range(T - 1, -1, -1):
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def clipped_objective(ratio, adv, eps: float):
    """Per-sample PPO surrogate min(r A, clip(r, 1-eps, 1+eps) A)."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)


def loss_and_grad(net: PolicyNet, batch: Batch, hp: TrainConfig):
    """Total loss = policy + c_v * value - c_e * entropy, and its exact gradient.

    Returns (grads keyed like ``net.params``, stats dict).
    """
    B = len(batch)
    if B == 0:
        raise ValueError("empty minibatch")
    acts, logp, value = forward_batch(net, batch.obs)
    h = acts[-1]
    rows = np.arange(B)

    new_logp = sum(logp[name][rows, batch.actions[:, j]] for j, name in enumerate(HEADS))
    ratio = np.exp(new_logp - batch.old_logp)
    A = batch.advantages
    surr1 = ratio * A
    surr2 = np.clip(ratio, 1 - hp.clip_eps, 1 + hp.clip_eps) * A
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    value_loss = np.mean((value - batch.returns) ** 2)

    entropy = 0.0
    probs = {}
    ent_each = {}
    for name in HEADS:
        p = np.exp(logp[name])
        probs[name] = p
        ent_each[name] = -(p * logp[name]).sum(axis=1)
        entropy += ent_each[name].mean()
    loss = policy_loss + hp.value_coef * value_loss - hp.entropy_coef * entropy
    if not np.isfinite(loss):
        raise NonFiniteLoss(
            f"loss={loss} policy={policy_loss} value={value_loss} entropy={entropy} "
            f"max|ratio|={np.max(np.abs(ratio)) if ratio.size else 0}"
        )

    # d loss / d joint log-prob; zero where the clipped branch is the minimum
    g_logp = np.where(surr1 <= surr2, -ratio * A, 0.0) / B

    grads: dict[str, np.ndarray] = {}
    g_h = np.zeros_like(h)
    for j, name in enumerate(HEADS):
        p = probs[name]
        onehot = np.zeros_like(p)
        onehot[rows, batch.actions[:, j]] = 1.0
        g_logits = g_logp[:, None] * (onehot - p)
        # dH/dz = -p (log p + H)
        g_logits += (hp.entropy_coef / B) * p * (logp[name] + ent_each[name][:, None])
        grads[f"W_{name}"] = h.T @ g_logits
        grads[f"b_{name}"] = g_logits.sum(axis=0)
        g_h += g_logits @ net.params[f"W_{name}"].T
    g_v = (2.0 * hp.value_coef / B) * (value - batch.returns)
    grads["W_value"] = h.T @ g_v[:, None]
    grads["b_value"] = np.array([g_v.sum()])
    g_h += g_v[:, None] @ net.params["W_value"].T

    for i in range(len(net.hidden) - 1, -1, -1):
        g_pre = g_h * (1.0 - acts[i + 1] ** 2)
        grads[f"W{i}"] = acts[i].T @ g_pre
        grads[f"b{i}"] = g_pre.sum(axis=0)
        g_h = g_pre @ net.params[f"W{i}"].T

    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_frac": float(np.mean(np.abs(ratio - 1) > hp.clip_eps)),
    }
    return grads, stats


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
