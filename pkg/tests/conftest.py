import time

import pytest

from edgemoe.core import validate_config
from edgemoe.dppo.ppo import TrainConfig
from edgemoe.dppo.train import train

TRAIN_SEEDS = (0, 1, 2)
EVAL_SEEDS = (101, 102, 103)

# criterion -> (passed, detail), filled in by the acceptance tests
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def trained(tmp_path_factory):
    """Default-config policies trained from three seeds, with wall times."""
    cfg = validate_config()
    hp = TrainConfig()
    out = {}
    for seed in TRAIN_SEEDS:
        d = tmp_path_factory.mktemp(f"train{seed}")
        t0 = time.perf_counter()
        result = train(cfg, hp, seed=seed, out_dir=d)
        out[seed] = (result, time.perf_counter() - t0)
    return cfg, out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: int(n[1:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")
