import math
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> list of (label, passed, detail)
ACCEPTANCE_RESULTS: dict = {}


def record(criterion: int, label: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.setdefault(criterion, []).append((label, bool(passed), detail))
    print(f"criterion {criterion} [{label}]: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.fixture
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE_RESULTS):
        entries = ACCEPTANCE_RESULTS[crit]
        ok = all(p for _, p, _ in entries)
        parts = "; ".join(f"{label}: {'pass' if p else 'FAIL'} {d}".strip() for label, p, d in entries)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} | {parts}")


@pytest.fixture(scope="session")
def operating_point():
    from delaytherm.model import ReducedParams

    return ReducedParams(g=0.36, q0=55.0, tau=2.04 * math.pi)
