from __future__ import annotations

import pytest

from altrust.core import Params


@pytest.fixture
def regular():
    return Params(0.05, 0.06, 0.04)


@pytest.fixture
def crisis():
    return Params(0.05, -0.01, 0.04)


@pytest.fixture
def stagnation():
    return Params(0.05, 0.0, 0.0)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion."""
    def record(number: int, title: str, ok: bool, detail: str, seconds: float):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail} ({seconds:.2f} s)"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
