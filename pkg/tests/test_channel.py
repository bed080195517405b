import binascii
import math
import zlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgemoe import channel
from edgemoe.core import RngStream, StreamLabel, validate_config

CFG = validate_config()


def test_path_gain_reference_and_clamp():
    assert channel.path_gain(1.0, CFG) == pytest.approx(1e-3)
    assert channel.path_gain(0.5, CFG) == pytest.approx(1e-3)
    assert channel.path_gain(0.0, CFG) == pytest.approx(1e-3)


def test_path_gain_at_100m_exponent_3_5():
    cfg = validate_config({"pathloss_exponent": 3.5})
    assert channel.path_gain(100.0, cfg) == pytest.approx(1e-10, rel=1e-12)


def test_rate_is_twice_bandwidth_when_snr_is_three():
    bw = 1e6
    gain = 3.0 * CFG.noise_psd * bw / 0.01
    assert channel.snr(0.01, gain, bw, CFG) == pytest.approx(3.0)
    assert channel.link_rate(0.01, gain, bw, CFG) == pytest.approx(2 * bw)


def test_shannon_hand_evaluation():
    s = channel.snr(0.01, 1e-10, 2e7, CFG)
    # 1e-12 / (3.98e-21 * 2e7)
    assert s == pytest.approx(12.5628, rel=1e-4)
    assert channel.link_rate(0.01, 1e-10, 2e7, CFG) == pytest.approx(2e7 * math.log2(1 + s))
    assert channel.link_rate(0.01, 1e-10, 2e7, CFG) == pytest.approx(7.5e7, rel=0.01)


def test_zero_power_zero_rate():
    assert channel.link_rate(0.0, 1e-10, 2e7, CFG) == 0.0


def test_transmission_arithmetic():
    b = channel.transmission(2e6, 2e6, 0.01)
    assert b.tx_time == pytest.approx(1.0) and b.tx_energy == pytest.approx(0.01)
    z = channel.transmission(0, 2e6, 0.01)
    assert z.tx_time == 0 and z.tx_energy == 0
    assert channel.transmission(1024 * 32768, 7.5e7, 0.01).tx_time == pytest.approx(0.447, abs=1e-3)


def test_zero_rate_with_payload_is_unreachable():
    with pytest.raises(channel.UnreachableLink):
        channel.transmission(10, 0.0, 0.01)
    assert channel.transmission(0, 0.0, 0.01).tx_time == 0.0


@given(bits=st.floats(0, 1e9), rate=st.floats(1.0, 1e10), power=st.floats(0, 1))
def test_energy_is_power_times_time(bits, rate, power):
    b = channel.transmission(bits, rate, power)
    assert b.tx_time >= 0
    assert b.tx_energy == pytest.approx(power * b.tx_time)


def test_crc_check_values_against_zlib():
    assert channel.crc32(b"123456789") == 0xCBF43926
    assert channel.crc32(b"") == 0
    assert channel.crc32(b"123456789") == zlib.crc32(b"123456789") == binascii.crc32(b"123456789")


@given(st.binary(max_size=256))
def test_crc_matches_zlib(payload):
    assert channel.crc32(payload) == zlib.crc32(payload)


@given(st.binary(min_size=1, max_size=64), st.data())
def test_crc_detects_single_bit_flip(payload, data):
    pos = data.draw(st.integers(0, len(payload) * 8 - 1))
    flipped = bytearray(payload)
    flipped[pos // 8] ^= 1 << (pos % 8)
    assert channel.crc32(bytes(flipped)) != channel.crc32(payload)


def test_corruption_limits():
    assert channel.corruption_probability(1.0, 0) == 0.0
    assert channel.corruption_probability(1e4, 1e6) == 0.0
    assert channel.corruption_probability(0.0, 1) == pytest.approx(0.5)


@given(snr=st.floats(0, 100), bits=st.floats(0, 1e8))
def test_corruption_is_a_probability_monotone_in_bits(snr, bits):
    p = channel.corruption_probability(snr, bits)
    assert 0.0 <= p <= 1.0
    assert channel.corruption_probability(snr, bits * 2) >= p


@pytest.mark.parametrize("snr,bits", [(12.56, 3.36e7), (30.0, 1e5), (25.0, 2e4)])
def test_packet_error_frequency_matches_closed_form(snr, bits):
    p = channel.corruption_probability(snr, bits)
    # independent evaluation of 1 - (1 - ber)^bits
    ber = 0.5 * math.exp(-snr / 2)
    assert p == pytest.approx(1 - (1 - ber) ** bits, rel=1e-9, abs=1e-12)
    rng = RngStream(99, StreamLabel.FADING)
    n = 100_000
    hits = sum(channel.packet_error(snr, bits, rng) for _ in range(n))
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) <= 3 * sigma + 1e-12


def test_fading_off_returns_path_gain():
    st_ = channel.channel_state(200.0, CFG, RngStream(1, StreamLabel.FADING))
    assert st_.gain == channel.path_gain(200.0, CFG)
    assert not st_.fading_enabled


def test_fading_has_unit_mean():
    cfg = validate_config({"fading": True})
    rng = RngStream(3, StreamLabel.FADING)
    g0 = channel.path_gain(200.0, cfg)
    gains = [channel.channel_state(200.0, cfg, rng).gain / g0 for _ in range(20000)]
    assert sum(gains) / len(gains) == pytest.approx(1.0, abs=0.03)
