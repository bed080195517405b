"""Synchronous distributed PPO.

Each iteration every worker rolls its own environment forward ``horizon``
steps with a frozen copy of the current network. The learner then pools the
workers' samples (ordered by worker seed, so pooling does not depend on the
order workers finish), runs minibatch Adam epochs, and publishes the new
parameters for the next round.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..core import RngStream, StreamLabel, SystemConfig, config_hash
from ..env import EdgeEnv, SlotRecord
from .checkpoint import atomic_write_text, save_checkpoint
from .net import PolicyNet, head_widths_for, indices_to_action, init_net, net_forward, sample_action
from .ppo import Adam, Batch, NonFiniteLoss, TrainConfig, gae, loss_and_grad

log = logging.getLogger(__name__)

LOG_COLUMNS = ["iteration", "mean_reward", "policy_loss", "value_loss", "entropy",
               "lat_sat", "acc_sat", "energy_mean"]


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, last_checkpoint: Path | None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


@dataclass
class Trajectory:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    slot_ends: np.ndarray
    bootstrap: float
    records: list[SlotRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rewards)


def episode_seed(worker_seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([worker_seed, episode]).generate_state(1, np.uint64)[0])


def default_worker_seeds(seed: int, workers: int) -> tuple[int, ...]:
    return tuple(int(s) for s in np.random.SeedSequence(seed).generate_state(workers, np.uint64))


class Worker:
    """A private environment plus the sampling stream that drives it."""

    def __init__(self, cfg: SystemConfig, seed: int):
        self.seed = seed
        self.env = EdgeEnv(cfg)
        self.rng = RngStream(seed, StreamLabel.ROLLOUT)
        self.episode = 0
        self.obs = self.env.reset(episode_seed(seed, 0))

    def rollout(self, net: PolicyNet, horizon: int) -> Trajectory:
        if net.obs_width != self.env.obs_width:
            raise ValueError(f"network input {net.obs_width} != observation width {self.env.obs_width}")
        W = self.env.obs_width
        obs = np.empty((horizon, W))
        actions = np.empty((horizon, 3), dtype=np.int64)
        logp = np.empty(horizon)
        rewards = np.empty(horizon)
        values = np.empty(horizon)
        dones = np.zeros(horizon, dtype=bool)
        slot_ends = np.zeros(horizon, dtype=bool)
        records = []
        for t in range(horizon):
            obs[t] = self.obs
            idx, lp, v = sample_action(net, self.obs, self.rng)
            actions[t] = idx
            logp[t] = lp
            values[t] = v
            self.obs, r, rec, done = self.env.step(indices_to_action(idx))
            rewards[t] = r
            dones[t] = done
            slot_ends[t] = done or self.env.slot != rec.slot
            records.append(rec)
            if done:
                self.episode += 1
                self.obs = self.env.reset(episode_seed(self.seed, self.episode))
        bootstrap = 0.0
        if not slot_ends[-1]:
            bootstrap = net_forward(net, self.obs)[1]
        return Trajectory(obs, actions, logp, rewards, values, dones, slot_ends, bootstrap, records)


def _rollout_job(worker: Worker, net: PolicyNet, horizon: int) -> tuple[Worker, Trajectory]:
    traj = worker.rollout(net, horizon)
    return worker, traj


def pool_samples(workers: list[Worker], trajs: list[Trajectory], hp: TrainConfig) -> Batch:
    """GAE per worker, then concatenation ordered by worker seed.

    Nothing carries over from one slot to the next, so the return after a
    slot boundary is the same whatever was done inside the slot. The GAE
    recursion is therefore cut at slot ends: this drops an action-independent
    term (no bias in the policy gradient) and with it most of the variance.
    """
    parts = []
    for w, tr in sorted(zip(workers, trajs), key=lambda p: p[0].seed):
        adv, ret = gae(tr.rewards, tr.values, tr.bootstrap, hp.gamma, hp.lam, tr.slot_ends)
        parts.append((tr, adv, ret))
    return Batch(
        obs=np.concatenate([p[0].obs for p in parts]),
        actions=np.concatenate([p[0].actions for p in parts]),
        old_logp=np.concatenate([p[0].logp for p in parts]),
        advantages=np.concatenate([p[1] for p in parts]),
        returns=np.concatenate([p[2] for p in parts]),
    )


def update(net: PolicyNet, opt: Adam, batch: Batch, hp: TrainConfig, rng: RngStream) -> dict[str, float]:
    """Normalize advantages over the pooled batch, then run the PPO epochs."""
    adv = batch.advantages
    batch = Batch(batch.obs, batch.actions, batch.old_logp,
                  (adv - adv.mean()) / (adv.std() + 1e-8), batch.returns)
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    n = 0
    N = len(batch)
    for _ in range(hp.epochs):
        perm = rng.gen.permutation(N)
        for start in range(0, N, hp.minibatch):
            grads, stats = loss_and_grad(net, batch.take(perm[start:start + hp.minibatch]), hp)
            opt.step(net.params, grads)
            for key in totals:
                totals[key] += stats[key]
            n += 1
    if not net.is_finite():
        raise NonFiniteLoss("parameters became non-finite after the update")
    return {k: v / n for k, v in totals.items()}


@dataclass
class TrainResult:
    net: PolicyNet
    log_rows: list[dict[str, float]]
    checkpoint: Path | None


def _log_text(rows: list[dict[str, float]], header: str) -> str:
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for row in rows:
        w.writerow([row["iteration"]] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])
    return buf.getvalue()


def train(cfg: SystemConfig, hp: TrainConfig, seed: int = 0, out_dir: str | Path | None = None,
          executor: Executor | None = None, init: PolicyNet | None = None) -> TrainResult:
    """Train the dynamic-scheme policy.

    With ``out_dir`` set, writes ``train_log.csv``, ``policy_iterNNNN.json``
    every ``hp.checkpoint_every`` iterations and ``policy.json`` at the end.
    """
    heads = head_widths_for(cfg)
    if init is not None:
        if init.obs_width != cfg.obs_width or init.head_widths != heads:
            raise ValueError(
                f"initial network ({init.obs_width}, {init.head_widths}) does not fit "
                f"config ({cfg.obs_width}, {heads})"
            )
        net = init.copy()
    else:
        net = init_net(cfg.obs_width, heads, RngStream(seed, StreamLabel.POLICY_INIT, 0))
    learner_rng = RngStream(seed, StreamLabel.POLICY_INIT, 1)
    opt = Adam(net.params, lr=hp.lr)
    seeds = hp.worker_seeds or default_worker_seeds(seed, hp.workers)
    workers = [Worker(cfg, s) for s in seeds]
    chash = config_hash(cfg)
    header = f"edgemoe {__version__} config_hash={chash} seed={seed}"
    out = Path(out_dir) if out_dir is not None else None
    last_ckpt: Path | None = None
    rows: list[dict[str, float]] = []

    for it in range(1, hp.iterations + 1):
        snapshot = net.copy()
        if executor is None:
            jobs = [_rollout_job(w, snapshot, hp.horizon) for w in workers]
        else:
            futures = [executor.submit(_rollout_job, w, snapshot, hp.horizon) for w in workers]
            jobs = [f.result() for f in futures]
        workers = [j[0] for j in jobs]
        trajs = [j[1] for j in jobs]
        batch = pool_samples(workers, trajs, hp)
        try:
            stats = update(net, opt, batch, hp, learner_rng)
        except NonFiniteLoss as exc:
            log.error("iteration %d aborted: %s", it, exc)
            if out is not None:
                atomic_write_text(out / "train_log.csv", _log_text(rows, header))
            raise TrainingAborted(f"non-finite loss at iteration {it}: {exc}", last_ckpt) from exc

        records = [r for tr in trajs for r in tr.records]
        row = {
            "iteration": it,
            "mean_reward": float(np.mean([r.reward for r in records])),
            **stats,
            "lat_sat": sum(r.latency_ok for r in records) / len(records),
            "acc_sat": sum(r.quality_ok for r in records) / len(records),
            "energy_mean": math.fsum(r.energy_j for r in records) / len(records),
        }
        rows.append(row)
        log.info("iter %d reward %.4f lat %.3f acc %.3f", it, row["mean_reward"], row["lat_sat"], row["acc_sat"])
        if out is not None and (it % hp.checkpoint_every == 0 or it == hp.iterations):
            last_ckpt = out / f"policy_iter{it:04d}.json"
            save_checkpoint(net, last_ckpt, chash)
            atomic_write_text(out / "train_log.csv", _log_text(rows, header))

    if out is not None:
        last_ckpt = out / "policy.json"
        save_checkpoint(net, last_ckpt, chash)
    return TrainResult(net, rows, last_ckpt)
