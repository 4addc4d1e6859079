from __future__ import annotations

import datetime as dt

import pytest

from sigfit.estimation import fit_nlme
from sigfit.growth import TransformKind
from sigfit.ingest import FIXTURE_PATH, DEFAULT_GROUPS, build_group, parse_csv, to_observations

CUTOFF = dt.date(2020, 6, 15)

# (criterion, passed, detail) lines collected by the acceptance module
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def fixture_feed():
    return parse_csv(FIXTURE_PATH)


@pytest.fixture(scope="session")
def fixture_sqrt_fit(fixture_feed):
    """Square-root model on the twelve default groups: (model, series by id, transform)."""
    k = TransformKind.power(0.5)
    series = {label: build_group(fixture_feed.records, label, 100, as_of=CUTOFF) for label in DEFAULT_GROUPS}
    m = fit_nlme([to_observations(g, k) for g in series.values()])
    return m, series, k


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
