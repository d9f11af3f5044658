"""Shared pytest plumbing: the acceptance report printed after the test summary."""

from __future__ import annotations

import pytest

_REPORT: dict[int, tuple[bool, str]] = {}


class AcceptanceLog:
    def record(self, criterion: int, ok: bool, detail: str) -> bool:
        _REPORT[criterion] = (ok, detail)
        print(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'} — {detail}")
        return ok


@pytest.fixture(scope="session")
def acceptance() -> AcceptanceLog:
    return AcceptanceLog()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: slow end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_REPORT):
        ok, detail = _REPORT[criterion]
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'} — {detail}")
