import os
from pathlib import Path

import pytest

from glimpse.data import DATA_DIR_ENV

# ~/data/mnist is the conventional local location; an explicit GLIMPSE_DATA_DIR always wins
_CANDIDATES = (Path(__file__).resolve().parent.parent / "data" / "mnist", Path.home() / "data" / "mnist")
if not os.environ.get(DATA_DIR_ENV):
    for cand in _CANDIDATES:
        if (cand / "t10k-images-idx3-ubyte").exists() or (cand / "t10k-images-idx3-ubyte.gz").exists():
            os.environ[DATA_DIR_ENV] = str(cand)
            break

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report():
    """Record the one-line verdict of an acceptance criterion."""
    def _record(number: int, passed: bool, text: str):
        ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {text}"
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
