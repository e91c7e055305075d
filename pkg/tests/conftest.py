import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record a one-line acceptance verdict, then fail the test if it did not pass."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(number: int, ok: bool, detail: str) -> None:
        lines.append((number, f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"))
        print(lines[-1][1])
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
