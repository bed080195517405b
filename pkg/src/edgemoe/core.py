"""Shared domain types, configuration validation, seeded streams and task generation."""

from __future__ import annotations

import enum
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemConfig:
    """Every tunable constant of the simulated edge system.

    Units are SI throughout (meters, watts, hertz, seconds, joules, FLOPs,
    bytes). Observation normalization: task length is divided by
    ``token_cap``; per-device channel gain is reported as
    ``1 + log10(gain / max_gain) / obs_gain_decades`` clipped to [0, 1];
    per-device compute budget is the unused fraction of the current slot.
    """

    # topology
    n_devices: int = 15
    area_side: float = 1000.0
    bs_position: tuple[float, float] | None = None
    device_positions: tuple[tuple[float, float], ...] | None = None
    expert_affinity: tuple[tuple[float, ...], ...] | None = None

    # radio
    p_max: float = 0.01
    bw_downlink: float = 20e6
    bw_uplink: float = 1e6
    noise_psd: float = 3.98e-21
    pathloss_exponent: float = 2.3
    ref_gain: float = 1e-3
    fading: bool = False

    # time and workload
    slot_duration: float = 1.0
    n_slots: int = 1000
    token_cap: int = 1024
    mean_len: float = 512.0
    tasks_per_slot_mean: float = 2.0
    deadline: float = 1.0

    # payload and compute
    bits_per_token: int = 1024
    cot_payload_factor: float = 0.25
    flops_per_token_expert: float = 1e9
    flops_per_token_dense: float | None = None
    kappa_device: float = 5e-12
    kappa_bs: float = 1e-11
    device_tflops: float = 2e12
    bs_tflops: float = 24 * 312e12
    device_mem: float = 32e9
    expert_mem: float = 8e9

    # reasoning quality
    q_hi: float = 0.9
    q_span: float = 0.3
    rho_k: float = 0.9
    rho_d: float = 0.75
    theta: float = 0.85
    n_bands: int = 4

    # gating
    gating_noise: float = 0.5
    affinity_std: float = 0.5

    # reward
    e_ref: float = 10.0
    lambda_lat: float = 1.0
    lambda_acc: float = 2.0

    # action menus
    k_choices: tuple[int, ...] = (1, 2, 3)
    d_max: int = 6
    power_levels: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)

    obs_gain_decades: float = 4.0
    seed: int = 0

    @property
    def obs_width(self) -> int:
        return 2 + 3 * self.n_devices

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``errors`` holds one ``(field, message)`` pair per violation.
    """

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{name}: {msg}" for name, msg in errors))


_FIELD_NAMES = {f.name for f in fields(SystemConfig)}
_TUPLE_FIELDS = {"k_choices", "power_levels"}
_POINT_FIELDS = {"bs_position"}
_NESTED_FIELDS = {"device_positions", "expert_affinity"}


def _coerce(raw: Mapping[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in raw.items():
        if value is None:
            out[key] = None
        elif key in _TUPLE_FIELDS or key in _POINT_FIELDS:
            out[key] = tuple(value)
        elif key in _NESTED_FIELDS:
            out[key] = tuple(tuple(float(x) for x in row) for row in value)
        else:
            out[key] = value
    return out


def validate_config(raw: SystemConfig | Mapping[str, Any] | None = None) -> SystemConfig:
    """Fill defaults, generate placement from the seed and check every invariant.

    Raises:
        ConfigError: listing each violated invariant by field name. Unknown
            keys in a mapping are reported the same way.
    """
    if raw is None:
        raw = {}
    if isinstance(raw, SystemConfig):
        raw = asdict(raw)
    unknown = sorted(set(raw) - _FIELD_NAMES)
    if unknown:
        raise ConfigError([(k, "unknown key") for k in unknown])
    try:
        cfg = SystemConfig(**_coerce(raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError([("config", str(exc))]) from exc

    errors: list[tuple[str, str]] = []

    def need(ok: bool, name: str, msg: str) -> None:
        if not ok:
            errors.append((name, msg))

    need(isinstance(cfg.n_devices, int) and cfg.n_devices >= 1, "n_devices", "must be an integer >= 1")
    need(cfg.area_side > 0, "area_side", "must be > 0")
    need(cfg.p_max > 0, "p_max", "must be > 0")
    need(cfg.bw_downlink > 0, "bw_downlink", "must be > 0")
    need(cfg.bw_uplink > 0, "bw_uplink", "must be > 0")
    need(cfg.noise_psd > 0, "noise_psd", "must be > 0")
    need(cfg.pathloss_exponent > 0, "pathloss_exponent", "must be > 0")
    need(cfg.ref_gain > 0, "ref_gain", "must be > 0")
    need(cfg.slot_duration > 0, "slot_duration", "must be > 0")
    need(cfg.n_slots >= 1, "n_slots", "must be >= 1")
    need(isinstance(cfg.token_cap, int) and cfg.token_cap >= 1, "token_cap", "must be an integer >= 1")
    need(cfg.mean_len > 0, "mean_len", "must be > 0")
    need(cfg.tasks_per_slot_mean >= 0, "tasks_per_slot_mean", "must be >= 0")
    need(cfg.deadline > 0, "deadline", "must be > 0")
    need(cfg.bits_per_token >= 0, "bits_per_token", "must be >= 0")
    need(cfg.cot_payload_factor >= 0, "cot_payload_factor", "must be >= 0")
    need(cfg.flops_per_token_expert > 0, "flops_per_token_expert", "must be > 0")
    need(cfg.flops_per_token_dense is None or cfg.flops_per_token_dense > 0,
         "flops_per_token_dense", "must be > 0")
    need(cfg.kappa_device >= 0, "kappa_device", "must be >= 0")
    need(cfg.kappa_bs >= 0, "kappa_bs", "must be >= 0")
    need(cfg.device_tflops > 0, "device_tflops", "must be > 0")
    need(cfg.bs_tflops > 0, "bs_tflops", "must be > 0")
    need(cfg.device_mem > 0, "device_mem", "must be > 0")
    need(cfg.expert_mem >= 0, "expert_mem", "must be >= 0")
    need(cfg.expert_mem <= cfg.device_mem, "expert_mem",
         f"expert footprint {cfg.expert_mem:g} B exceeds device memory {cfg.device_mem:g} B")
    for name in ("q_hi", "q_span", "theta"):
        need(0.0 <= getattr(cfg, name) <= 1.0, name, "must lie in [0, 1]")
    for name in ("rho_k", "rho_d"):
        need(0.0 < getattr(cfg, name) < 1.0, name, "must lie in (0, 1)")
    need(cfg.q_hi - cfg.q_span >= 0.0, "q_span", "q_hi - q_span must be >= 0")
    need(cfg.n_bands >= 1, "n_bands", "must be >= 1")
    need(cfg.gating_noise >= 0, "gating_noise", "must be >= 0")
    need(cfg.affinity_std >= 0, "affinity_std", "must be >= 0")
    need(cfg.e_ref > 0, "e_ref", "must be > 0")
    need(cfg.lambda_lat >= 0, "lambda_lat", "must be >= 0")
    need(cfg.lambda_acc >= 0, "lambda_acc", "must be >= 0")
    need(cfg.d_max >= 0, "d_max", "must be >= 0")
    need(len(cfg.k_choices) >= 1 and all(1 <= k <= cfg.n_devices for k in cfg.k_choices),
         "k_choices", f"must be a nonempty subset of 1..{cfg.n_devices}")
    need(len(cfg.power_levels) >= 1 and all(0 < p <= 1 for p in cfg.power_levels),
         "power_levels", "fractions of p_max must lie in (0, 1]")
    need(cfg.obs_gain_decades > 0, "obs_gain_decades", "must be > 0")
    need(isinstance(cfg.seed, int) and 0 <= cfg.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
    if errors:
        raise ConfigError(errors)

    updates: dict[str, Any] = {}
    side = cfg.area_side
    if cfg.bs_position is None:
        updates["bs_position"] = (side / 2, side / 2)
    if cfg.flops_per_token_dense is None:
        updates["flops_per_token_dense"] = cfg.n_devices * cfg.flops_per_token_expert
    placement = RngStream(cfg.seed, StreamLabel.PLACEMENT)
    if cfg.device_positions is None:
        pts = placement.gen.uniform(0.0, side, size=(cfg.n_devices, 2))
        updates["device_positions"] = tuple((float(x), float(y)) for x, y in pts)
    if cfg.expert_affinity is None:
        aff = cfg.affinity_std * placement.gen.standard_normal(size=(cfg.n_devices, cfg.n_bands))
        updates["expert_affinity"] = tuple(tuple(float(a) for a in row) for row in aff)
    cfg = replace(cfg, **updates)

    bx, by = cfg.bs_position
    need(0 <= bx <= side and 0 <= by <= side, "bs_position", "outside the coverage area")
    if len(cfg.device_positions) != cfg.n_devices:
        errors.append(("device_positions", f"expected {cfg.n_devices} positions"))
    else:
        for i, (x, y) in enumerate(cfg.device_positions):
            need(0 <= x <= side and 0 <= y <= side, "device_positions",
                 f"device {i} at ({x}, {y}) outside the {side} m square")
    if len(cfg.expert_affinity) != cfg.n_devices or any(
        len(row) != cfg.n_bands for row in cfg.expert_affinity
    ):
        errors.append(("expert_affinity", f"expected {cfg.n_devices} rows of {cfg.n_bands} values"))
    elif not all(math.isfinite(a) for row in cfg.expert_affinity for a in row):
        errors.append(("expert_affinity", "must be finite"))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path: str | os.PathLike | None = None, env: Mapping[str, str] | None = None) -> SystemConfig:
    """Read a JSON config (or defaults when ``path`` is None) and validate it.

    ``MEGI_SEED`` in the environment overrides the ``seed`` field.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([("config", f"cannot read {path}: {exc}")]) from exc
        if not isinstance(raw, dict):
            raise ConfigError([("config", "top level must be a JSON object")])
    env = os.environ if env is None else env
    if env.get("MEGI_SEED"):
        try:
            raw["seed"] = int(env["MEGI_SEED"])
        except ValueError as exc:
            raise ConfigError([("MEGI_SEED", "must be an integer")]) from exc
    return validate_config(raw)


def config_hash(cfg: SystemConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


class StreamLabel(enum.IntEnum):
    ARRIVALS = 0
    GATING = 1
    FADING = 2
    POLICY_INIT = 3
    ROLLOUT = 4
    PLACEMENT = 5


class RngStream:
    """A labelled PCG64 stream.

    Streams for distinct labels (or indices) under one seed are statistically
    independent, so drawing from one never shifts another.
    """

    __slots__ = ("label", "gen")

    def __init__(self, seed: int, label: StreamLabel, index: int = 0):
        self.label = label
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(label), int(index)))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def random(self) -> float:
        return float(self.gen.random())

    def normal(self) -> float:
        return float(self.gen.standard_normal())

    def integers(self, high: int) -> int:
        return int(self.gen.integers(high))


# ---------------------------------------------------------------------------
# Tasks and devices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TaskRequest:
    id: int
    length: int
    complexity: float
    arrival_slot: int
    deadline: float

    def band(self, n_bands: int) -> int:
        return complexity_band(self.complexity, n_bands)


@dataclass(frozen=True)
class ExpertProfile:
    flops_per_token: float
    mem_footprint: float
    affinity: tuple[float, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class DeviceProfile:
    id: int
    position: tuple[float, float]
    tflops: float
    mem: float
    expert: ExpertProfile


def complexity_band(complexity: float, n_bands: int) -> int:
    return min(int(complexity * n_bands), n_bands - 1)


def build_devices(cfg: SystemConfig) -> list[DeviceProfile]:
    return [
        DeviceProfile(
            id=i,
            position=cfg.device_positions[i],
            tflops=cfg.device_tflops,
            mem=cfg.device_mem,
            expert=ExpertProfile(cfg.flops_per_token_expert, cfg.expert_mem, cfg.expert_affinity[i]),
        )
        for i in range(cfg.n_devices)
    ]


def sample_poisson(rng: RngStream, mean: float) -> int:
    """Poisson draw: exact CDF inversion below mean 30, rounded normal above."""
    if mean <= 0:
        return 0
    if mean < 30:
        u = rng.random()
        k = 0
        p = math.exp(-mean)
        cdf = p
        while u > cdf and p > 0:
            k += 1
            p *= mean / k
            cdf += p
        return k
    return max(0, int(round(mean + math.sqrt(mean) * rng.normal())))


def sample_task(rng: RngStream, cfg: SystemConfig, slot: int, task_id: int = 0) -> TaskRequest:
    length = min(sample_poisson(rng, cfg.mean_len), cfg.token_cap)
    return TaskRequest(
        id=task_id,
        length=max(length, 1),
        complexity=rng.random(),
        arrival_slot=slot,
        deadline=cfg.deadline,
    )


def sample_slot_tasks(rng: RngStream, cfg: SystemConfig, slot: int, first_id: int) -> list[TaskRequest]:
    n = sample_poisson(rng, cfg.tasks_per_slot_mean)
    return [sample_task(rng, cfg, slot, first_id + i) for i in range(n)]


def generate_tasks(cfg: SystemConfig, seed: int, n_slots: int | None = None) -> list[TaskRequest]:
    """The full arrival sequence an episode with ``seed`` would see."""
    rng = RngStream(seed, StreamLabel.ARRIVALS)
    tasks: list[TaskRequest] = []
    for slot in range(cfg.n_slots if n_slots is None else n_slots):
        tasks.extend(sample_slot_tasks(rng, cfg, slot, len(tasks)))
    return tasks
