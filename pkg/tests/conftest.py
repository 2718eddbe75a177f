import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from letterdec.synth import synth_dataset

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def small_synth():
    # 26 x 12 trials, 24 x 400, snr 1
    return synth_dataset(snr=1.0, n_per_class=12, seed=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def record(n: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[n] = (passed, detail)


@pytest.fixture()
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
