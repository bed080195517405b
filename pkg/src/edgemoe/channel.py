"""Wireless link model: log-distance path loss, Shannon rate, airtime and
energy of a transmission, the bit-error corruption process, and CRC-32."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import RngStream, SystemConfig


class UnreachableLink(RuntimeError):
    """A nonempty payload was scheduled on a zero-rate link."""


@dataclass(frozen=True, slots=True)
class ChannelState:
    distance: float
    gain: float
    fading_enabled: bool = False


@dataclass(frozen=True, slots=True)
class LinkBudget:
    power: float
    rate: float
    tx_time: float
    tx_energy: float
    snr: float = 0.0


def path_gain(distance: float, cfg: SystemConfig) -> float:
    """Log-distance power gain; distances under 1 m are treated as 1 m."""
    return cfg.ref_gain * max(distance, 1.0) ** (-cfg.pathloss_exponent)


def channel_state(distance: float, cfg: SystemConfig, rng: RngStream | None = None) -> ChannelState:
    gain = path_gain(distance, cfg)
    if cfg.fading and rng is not None:
        # unit-mean Rayleigh power fading; floor keeps gain strictly positive
        gain *= max(float(rng.gen.exponential()), 1e-12)
    return ChannelState(distance, gain, cfg.fading and rng is not None)


def snr(power: float, gain: float, bandwidth: float, cfg: SystemConfig) -> float:
    return power * gain / (cfg.noise_psd * bandwidth)


def link_rate(power: float, gain: float, bandwidth: float, cfg: SystemConfig) -> float:
    """Shannon capacity in bits/second."""
    if power <= 0:
        return 0.0
    return bandwidth * math.log2(1.0 + snr(power, gain, bandwidth, cfg))


def transmission(bits: float, rate: float, power: float, link_snr: float = 0.0) -> LinkBudget:
    if bits <= 0:
        return LinkBudget(power, rate, 0.0, 0.0, link_snr)
    if rate <= 0:
        raise UnreachableLink(f"{bits:g} bits on a zero-rate link")
    t = bits / rate
    return LinkBudget(power, rate, t, power * t, link_snr)


def bit_error_rate(link_snr: float) -> float:
    return 0.5 * math.exp(-link_snr / 2.0)


def corruption_probability(link_snr: float, bits: float) -> float:
    """P(at least one of ``bits`` independent bits flips)."""
    if bits <= 0:
        return 0.0
    ber = bit_error_rate(link_snr)
    if ber >= 1.0:
        return 1.0
    return -math.expm1(bits * math.log1p(-ber))


def packet_error(link_snr: float, bits: float, rng: RngStream) -> bool:
    # one uniform draw per packet keeps the stream aligned regardless of outcome
    u = rng.random()
    return u < corruption_probability(link_snr, bits)


def _make_crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0xEDB88320 if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _make_crc_table()


def crc32(payload: bytes) -> int:
    """IEEE 802.3 CRC-32 (reflected 0xEDB88320, init and final XOR 0xFFFFFFFF)."""
    crc = 0xFFFFFFFF
    table = _CRC_TABLE
    for byte in payload:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF
