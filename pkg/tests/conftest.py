import numpy as np
import pytest

ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail=""):
    """Store one acceptance outcome; printed in the terminal summary."""
    ACCEPTANCE[number] = (title, bool(passed), detail)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number:2d}: {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
