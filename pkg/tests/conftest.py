import sys
from pathlib import Path

import pytest

# make the oracle helpers importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))

_REPORT: list[str] = []


@pytest.fixture
def report():
    """Append a line to the summary printed at the end of the session."""
    return _REPORT.append


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("numerical report")
        for line in _REPORT:
            terminalreporter.write_line(line)
