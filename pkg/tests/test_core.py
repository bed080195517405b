import json
import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgemoe.core import (
    ConfigError,
    RngStream,
    StreamLabel,
    SystemConfig,
    complexity_band,
    config_hash,
    generate_tasks,
    load_config,
    sample_poisson,
    sample_task,
    validate_config,
)


def test_defaults_generate_fifteen_positions_inside_area():
    cfg = validate_config()
    assert cfg.n_devices == 15
    assert len(cfg.device_positions) == 15
    for x, y in cfg.device_positions:
        assert 0 <= x <= cfg.area_side and 0 <= y <= cfg.area_side
    assert cfg.bs_position == (500.0, 500.0)
    assert cfg.flops_per_token_dense == 15e9
    assert len(cfg.expert_affinity) == 15
    assert all(len(row) == cfg.n_bands for row in cfg.expert_affinity)


def test_placement_is_a_function_of_seed():
    a, b, c = validate_config({"seed": 3}), validate_config({"seed": 3}), validate_config({"seed": 4})
    assert a.device_positions == b.device_positions
    assert a.device_positions != c.device_positions
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_zero_power_is_rejected_by_name():
    with pytest.raises(ConfigError) as exc:
        validate_config({"p_max": 0})
    assert [name for name, _ in exc.value.errors] == ["p_max"]
    assert "p_max" in str(exc.value)


def test_expert_larger_than_device_memory_is_hard_error():
    cfg = SystemConfig()
    with pytest.raises(ConfigError) as exc:
        validate_config({"expert_mem": 2 * cfg.device_mem})
    assert "expert_mem" in [name for name, _ in exc.value.errors]


def test_every_violation_is_listed():
    with pytest.raises(ConfigError) as exc:
        validate_config({"p_max": -1, "theta": 2.0, "rho_d": 1.0})
    names = {name for name, _ in exc.value.errors}
    assert {"p_max", "theta", "rho_d"} <= names


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config({"n_device": 3})
    assert exc.value.errors[0][0] == "n_device"


def test_position_outside_area_rejected():
    with pytest.raises(ConfigError):
        validate_config({"n_devices": 1, "k_choices": [1], "device_positions": [[2000.0, 10.0]]})


def test_load_config_file_and_seed_override(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"n_devices": 4, "seed": 9, "k_choices": [1, 2]}))
    cfg = load_config(p, env={})
    assert cfg.n_devices == 4 and cfg.seed == 9 and cfg.k_choices == (1, 2)
    assert load_config(p, env={"MEGI_SEED": "11"}).seed == 11
    with pytest.raises(ConfigError):
        load_config(p, env={"MEGI_SEED": "x"})
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad, env={})


def test_streams_are_independent_and_reproducible():
    a = RngStream(5, StreamLabel.ARRIVALS).gen.random(4)
    b = RngStream(5, StreamLabel.ARRIVALS).gen.random(4)
    c = RngStream(5, StreamLabel.GATING).gen.random(4)
    d = RngStream(5, StreamLabel.ARRIVALS, 1).gen.random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


class _Fixed:
    """Stand-in stream returning preset normal/uniform draws."""

    def __init__(self, normal=0.0, uniform=0.5):
        self._n, self._u = normal, uniform

    def normal(self):
        return self._n

    def random(self):
        return self._u


def test_draw_above_cap_is_clamped():
    cfg = validate_config()
    task = sample_task(_Fixed(normal=40.0), cfg, slot=0)
    assert task.length == 1024


def test_zero_draw_becomes_length_one():
    cfg = validate_config({"mean_len": 0.5})
    # u below exp(-0.5) inverts to a Poisson draw of 0
    assert sample_poisson(_Fixed(uniform=0.1), 0.5) == 0
    assert sample_task(_Fixed(uniform=0.1), cfg, slot=0).length == 1


def test_small_mean_poisson_matches_pmf():
    rng = RngStream(1, StreamLabel.ARRIVALS)
    draws = [sample_poisson(rng, 2.0) for _ in range(20000)]
    for k in range(5):
        expect = math.exp(-2.0) * 2.0**k / math.factorial(k)
        freq = draws.count(k) / len(draws)
        assert abs(freq - expect) < 4 * math.sqrt(expect * (1 - expect) / len(draws))


def test_length_mean_law_of_large_numbers():
    cfg = validate_config()
    rng = RngStream(2024, StreamLabel.ARRIVALS)
    lengths = [sample_task(rng, cfg, 0).length for _ in range(10_000)]
    assert abs(statistics.fmean(lengths) - 512) <= 3 * math.sqrt(512 / 10_000)
    assert min(lengths) >= 1 and max(lengths) <= 1024


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32), mean=st.floats(0.1, 3000), cap=st.integers(1, 4096))
def test_lengths_always_within_bounds(seed, mean, cap):
    cfg = validate_config({"mean_len": mean, "token_cap": cap})
    rng = RngStream(seed, StreamLabel.ARRIVALS)
    for _ in range(20):
        t = sample_task(rng, cfg, 0)
        assert 1 <= t.length <= cap
        assert 0.0 <= t.complexity < 1.0


@given(c=st.floats(0.0, 1.0), n=st.integers(1, 8))
def test_band_in_range(c, n):
    assert 0 <= complexity_band(c, n) < n


def test_generate_tasks_deterministic_with_sequential_ids():
    cfg = validate_config()
    a = generate_tasks(cfg, 7, 50)
    assert a == generate_tasks(cfg, 7, 50)
    assert [t.id for t in a] == list(range(len(a)))
    assert a != generate_tasks(cfg, 8, 50)


def test_clamp_holds_over_a_million_samples():
    cfg = validate_config()
    rng = RngStream(77, StreamLabel.ARRIVALS)
    lo, hi = cfg.token_cap, 1
    for _ in range(1_000_000):
        n = sample_task(rng, cfg, 0).length
        lo, hi = min(lo, n), max(hi, n)
    assert lo >= 1 and hi <= cfg.token_cap
