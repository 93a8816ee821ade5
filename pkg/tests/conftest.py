import numpy as np
import pytest

VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def verdict(request):
    """Record and print one pass/fail line for an acceptance criterion."""
    lines = request.config.stash.setdefault(VERDICTS, [])

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}"
        if detail:
            line += f": {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
