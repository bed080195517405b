"""Time-slotted edge inference environment.

One ``step`` resolves one task end to end. Slots are bookkeeping: every task
of a slot arrives at the slot start, the downlink band, the uplink channel
and each device's compute are FIFO resources that are free again at the
start of the next slot, and a task's latency is measured from its slot
start.
"""

from __future__ import annotations

import math
import struct
from dataclasses import astuple, dataclass, fields
from typing import Sequence

import numpy as np

from . import channel
from .compute import dense_expert, execute_at_bs, execute_on_device, forward_cost
from .core import (
    RngStream,
    StreamLabel,
    SystemConfig,
    TaskRequest,
    build_devices,
    sample_slot_tasks,
)
from .moe import Partial, aggregate, gating_scores, top_k_route
from .quality import quality_score, satisfied


class InvalidAction(ValueError):
    """The caller passed an action outside the configured menus."""


@dataclass(frozen=True, slots=True)
class Action:
    k_index: int = 0
    power_index: int = 0
    d: int = 0
    at_bs: bool = False


@dataclass(frozen=True, slots=True)
class SlotRecord:
    slot: int
    task_id: int
    length: int
    complexity: float
    at_bs: bool
    k: int
    power_w: float
    depth: int
    energy_j: float
    latency_s: float
    quality: float
    latency_ok: bool
    quality_ok: bool
    failed: bool
    retransmissions: int
    reward: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        out = []
        for v in astuple(self):
            if isinstance(v, bool):
                out.append(str(int(v)))
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


@dataclass(frozen=True)
class EpisodeMetrics:
    total_energy: float
    acc_sat_rate: float
    lat_sat_rate: float
    tasks: int
    failed: int
    empty: bool = False


def reward_of(energy: float, latency_ok: bool, quality_ok: bool, cfg: SystemConfig) -> float:
    return (
        -energy / cfg.e_ref
        - cfg.lambda_lat * (not latency_ok)
        - cfg.lambda_acc * (not quality_ok)
    )


def summarize(records: Sequence[SlotRecord]) -> EpisodeMetrics:
    """Fold an episode's records. Failed tasks already carry both flags false."""
    n = len(records)
    if n == 0:
        return EpisodeMetrics(0.0, 0.0, 0.0, 0, 0, empty=True)
    return EpisodeMetrics(
        total_energy=math.fsum(r.energy_j for r in records),
        acc_sat_rate=sum(r.quality_ok for r in records) / n,
        lat_sat_rate=sum(r.latency_ok for r in records) / n,
        tasks=n,
        failed=sum(r.failed for r in records),
    )


_FRAME = struct.Struct("<IIIIB")


class EdgeEnv:
    """Reset/observe/step wrapper around the whole system model.

    Instances share no mutable state, so several can run side by side.
    """

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.devices = build_devices(cfg)
        bx, by = cfg.bs_position
        self.distances = [math.hypot(x - bx, y - by) for x, y in cfg.device_positions]
        self.path_gains = [channel.path_gain(d, cfg) for d in self.distances]
        g = np.array(self.path_gains)
        self._gain_obs = np.clip(1.0 + np.log10(g / g.max()) / cfg.obs_gain_decades, 0.0, 1.0)
        self._affinity = np.array(cfg.expert_affinity, dtype=float)
        self._dense = dense_expert(cfg)
        self.done = True
        self.slot = 0
        self.queue: list[TaskRequest] = []

    @property
    def obs_width(self) -> int:
        return self.cfg.obs_width

    # -- episode control ---------------------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        self.seed = seed
        self._arrivals = RngStream(seed, StreamLabel.ARRIVALS)
        self._gating = RngStream(seed, StreamLabel.GATING)
        self._fading = RngStream(seed, StreamLabel.FADING)
        self._next_id = 0
        self.slot = -1
        self.done = False
        self._advance_slot()
        return self.observe()

    def _open_slot(self) -> None:
        n = self.cfg.n_devices
        self._dev_free = [0.0] * n
        self._dl_free = 0.0
        self._ul_free = 0.0

    def _advance_slot(self) -> None:
        while True:
            self.slot += 1
            if self.slot >= self.cfg.n_slots:
                self.done = True
                self.queue = []
                return
            tasks = sample_slot_tasks(self._arrivals, self.cfg, self.slot, self._next_id)
            self._next_id += len(tasks)
            if tasks:
                self.queue = tasks
                self._open_slot()
                return

    @property
    def task(self) -> TaskRequest | None:
        return self.queue[0] if self.queue else None

    def observe(self) -> np.ndarray:
        cfg = self.cfg
        obs = np.zeros(cfg.obs_width)
        task = self.task
        if task is None:
            return obs
        obs[0] = task.length / cfg.token_cap
        obs[1] = task.complexity
        band = task.band(cfg.n_bands)
        per = obs[2:].reshape(cfg.n_devices, 3)
        per[:, 0] = self._gain_obs
        free = np.array(self._dev_free)
        per[:, 1] = np.clip(1.0 - free / cfg.slot_duration, 0.0, 1.0)
        per[:, 2] = self._affinity[:, band]
        return obs

    # -- one task ----------------------------------------------------------

    def check_action(self, action: Action) -> None:
        cfg = self.cfg
        if action.at_bs:
            if not 0 <= action.d <= cfg.d_max:
                raise InvalidAction(f"depth {action.d} outside 0..{cfg.d_max}")
            return
        if not 0 <= action.k_index < len(cfg.k_choices):
            raise InvalidAction(f"k_index {action.k_index} outside menu of {len(cfg.k_choices)}")
        if not 0 <= action.power_index < len(cfg.power_levels):
            raise InvalidAction(f"power_index {action.power_index} outside menu of {len(cfg.power_levels)}")
        if not 0 <= action.d <= cfg.d_max:
            raise InvalidAction(f"depth {action.d} outside 0..{cfg.d_max}")

    def step(self, action: Action) -> tuple[np.ndarray, float, SlotRecord, bool]:
        if self.done:
            raise RuntimeError("step() on a finished episode; call reset()")
        self.check_action(action)
        task = self.queue[0]
        if action.at_bs:
            record = self._run_dense(task, action)
        else:
            record = self._run_moe(task, action)
        self.queue.pop(0)
        if not self.queue:
            self._advance_slot()
        return self.observe(), record.reward, record, self.done

    def _finish(self, task: TaskRequest, *, at_bs: bool, k: int, power: float, d: int,
                energy: float, latency: float, failed: bool, retx: int) -> SlotRecord:
        cfg = self.cfg
        score = quality_score(task.complexity, k, d, cfg)
        quality_ok = satisfied(score, cfg).satisfied and not failed
        latency_ok = latency <= task.deadline and not failed
        return SlotRecord(
            slot=self.slot,
            task_id=task.id,
            length=task.length,
            complexity=task.complexity,
            at_bs=at_bs,
            k=k,
            power_w=power,
            depth=d,
            energy_j=energy,
            latency_s=latency,
            quality=score,
            latency_ok=latency_ok,
            quality_ok=quality_ok,
            failed=failed,
            retransmissions=retx,
            reward=reward_of(energy, latency_ok, quality_ok, cfg),
        )

    def _run_dense(self, task: TaskRequest, action: Action) -> SlotRecord:
        cost = forward_cost(task.length, action.d, self._dense, self.cfg)
        latency, energy = execute_at_bs(cost, self.cfg)
        return self._finish(task, at_bs=True, k=self.cfg.n_devices, power=0.0, d=action.d,
                            energy=energy, latency=latency, failed=False, retx=0)

    def _send(self, bits: float, gain: float, power: float, bandwidth: float,
              frame: bytes) -> tuple[float, float, bool, int]:
        """One CRC-checked transfer with a single retransmission.

        Returns (airtime, energy, delivered, retransmissions).
        """
        if bits <= 0:
            return 0.0, 0.0, True, 0
        cfg = self.cfg
        s = channel.snr(power, gain, bandwidth, cfg)
        rate = channel.link_rate(power, gain, bandwidth, cfg)
        try:
            budget = channel.transmission(bits, rate, power, s)
        except channel.UnreachableLink:
            return math.inf, 0.0, False, 0
        checksum = channel.crc32(frame)
        airtime = energy = 0.0
        for attempt in range(2):
            airtime += budget.tx_time
            energy += budget.tx_energy
            received = frame
            if channel.packet_error(s, bits, self._fading):
                pos = self._fading.integers(len(frame) * 8)
                buf = bytearray(frame)
                buf[pos // 8] ^= 1 << (pos % 8)
                received = bytes(buf)
            if channel.crc32(received) == checksum:
                return airtime, energy, True, attempt
        return airtime, energy, False, 1

    def _link_gain(self, device: int) -> float:
        if not self.cfg.fading:
            return self.path_gains[device]
        return channel.channel_state(self.distances[device], self.cfg, self._fading).gain

    def _run_moe(self, task: TaskRequest, action: Action) -> SlotRecord:
        cfg = self.cfg
        k = cfg.k_choices[action.k_index]
        power = cfg.power_levels[action.power_index] * cfg.p_max
        d = action.d
        weights = gating_scores(task, self.devices, self._gating, cfg.gating_noise, cfg.n_bands)
        assignment = top_k_route(weights, k, task)

        active = [(e, n) for e, n in zip(assignment.experts, assignment.token_split) if n > 0]
        share = cfg.bw_downlink / max(len(active), 1)
        energy = 0.0
        retx = 0
        partials: dict[int, Partial] = {}
        for e, n in zip(assignment.experts, assignment.token_split):
            if n == 0:
                partials[e] = Partial(e, 0, d, True, 0.0)

        # downlink: the task's active branches share the band concurrently
        dl_start = self._dl_free
        dl_done: dict[int, tuple[float, bool]] = {}
        band_busy = 0.0
        for e, n in active:
            frame = _FRAME.pack(task.id, self.slot, e, n, 0)
            t, en, ok, r = self._send(n * cfg.bits_per_token, self._link_gain(e), power, share, frame)
            energy += en
            retx += r
            dl_done[e] = (dl_start + t, ok)
            if math.isfinite(t):
                band_busy = max(band_busy, t)
        self._dl_free = dl_start + band_busy

        # compute on each device, FIFO behind earlier tasks of this slot
        ready: list[tuple[float, int, int, float]] = []
        for rank, (e, n) in enumerate(active):
            arrive, ok = dl_done[e]
            if not ok:
                partials[e] = Partial(e, n, d, False, arrive)
                continue
            cost = forward_cost(n, d, self.devices[e].expert, cfg)
            lat, en = execute_on_device(cost, self.devices[e], cfg)
            energy += en
            start = max(arrive, self._dev_free[e])
            self._dev_free[e] = start + lat
            ready.append((start + lat, rank, e, cost.output_bits))

        # uplink: one channel, branches served in order of compute completion
        for done_at, _, e, bits in sorted(ready):
            n = dict(active)[e]
            frame = _FRAME.pack(task.id, self.slot, e, n, 1)
            t, en, ok, r = self._send(bits, self._link_gain(e), power, cfg.bw_uplink, frame)
            energy += en
            retx += r
            start = max(done_at, self._ul_free)
            if math.isfinite(t):
                self._ul_free = start + t
            partials[e] = Partial(e, n, d, ok, start + t)

        result = aggregate([partials[e] for e in assignment.experts], assignment)
        return self._finish(task, at_bs=False, k=k, power=power, d=d, energy=energy,
                            latency=result.latency, failed=result.failed, retx=retx)


def run_episode(env: EdgeEnv, policy, seed: int) -> list[SlotRecord]:
    """Roll ``policy`` (obs -> Action) through one full episode."""
    obs = env.reset(seed)
    records: list[SlotRecord] = []
    done = env.done
    while not done:
        obs, _, record, done = env.step(policy(obs))
        records.append(record)
    return records
