from __future__ import annotations

import math

import pytest

from ssmf.measure import IfsSpec, validate_ifs

_ACCEPTANCE: dict[int, tuple[str, bool]] = {}


@pytest.fixture
def record_acceptance():
    """Register one acceptance criterion's outcome for the terminal summary."""

    def record(number: int, title: str, ok: bool) -> None:
        _ACCEPTANCE[number] = (title, bool(ok))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def bernoulli_half() -> IfsSpec:
    """Uniform law on [-2, 2]."""
    return validate_ifs(IfsSpec.from_groups([(0.5, [-1.0, 1.0], [0.5, 0.5])], B1=2.0))


@pytest.fixture
def two_group() -> IfsSpec:
    return validate_ifs(IfsSpec.from_groups(
        [(0.6, [0.0, math.pi], [0.25, 0.25]), (0.55, [0.0, 2.0], [0.2, 0.3])], B1=1.2, B2=2.0))
