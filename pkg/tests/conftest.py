import datetime as dt
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from newsflow.calendar_time import TradingCalendar, weekday_calendar

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cal3() -> TradingCalendar:
    # Mon 2012-06-04 .. Wed 2012-06-06
    return weekday_calendar(dt.date(2012, 6, 4), 3)


@pytest.fixture(scope="session")
def small_world(tmp_path_factory):
    """A small synthetic dataset on disk (6 companies x 8 days, half planted)."""
    from newsflow.synth import SynthConfig, generate

    out = tmp_path_factory.mktemp("synth_small")
    cfg = SynthConfig(n_companies=6, n_days=8, seed=5, causal_fraction=0.5, causal_strength=0.01,
                      causal_lag_unit=65)
    paths = generate(cfg, out)
    return cfg, out, paths


# --------------------------------------------------------------------------- acceptance summary

_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance():
    """record(number, passed, detail): one line per acceptance criterion in the terminal summary.

    A criterion recorded several times passes only if every record passed.
    """
    def record(number: int, passed: bool, detail: str) -> None:
        prev = _ACCEPTANCE.get(number)
        if prev is None:
            _ACCEPTANCE[number] = (bool(passed), [detail])
        else:
            _ACCEPTANCE[number] = (prev[0] and bool(passed), prev[1] + [detail])
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, details = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  ({'; '.join(details)})")
