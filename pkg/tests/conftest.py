import pytest

ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record(request):
    """Record one pass/fail line for the acceptance summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def _record(number, label, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] C{number:02d} {label}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split("] ", 1)[1]):
            terminalreporter.write_line(line)
