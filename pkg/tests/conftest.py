import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture()
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number, title, passed, detail):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} [{title}] {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line
    return record
