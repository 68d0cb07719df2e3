from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

from buq.optimizer import AdapterConfig
from buq.synth import SynthConfig, synth_generate
from buq.timeseries import TimeSeriesTable, noleap_hours

HERE = Path(__file__).resolve().parent


def make_table(n_hours: int, start: str = "2017-01-01T00", buses=("1",), demand=None, wind=None) -> TimeSeriesTable:
    ts = noleap_hours(start, n_hours)
    nb = len(buses)
    d = np.full((nb, n_hours), 100.0) if demand is None else np.broadcast_to(demand, (nb, n_hours))
    w = np.full((nb, n_hours), 0.5) if wind is None else np.broadcast_to(wind, (nb, n_hours))
    return TimeSeriesTable(ts, tuple(buses), d, w)


@pytest.fixture(scope="session")
def synth10() -> TimeSeriesTable:
    return synth_generate(SynthConfig(years=10, seed=5))


@pytest.fixture(scope="session")
def synth2() -> TimeSeriesTable:
    return synth_generate(SynthConfig(years=2, seed=1))


@pytest.fixture
def fake_adapter() -> AdapterConfig:
    return AdapterConfig(command=sys.executable,
                         args=(str(HERE / "fake_cbc.py"), "{lp}", "solve", "solu", "{sol}"), timeout=120)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
