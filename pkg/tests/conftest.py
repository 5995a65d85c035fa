import pytest

# (number, passed, detail) for every acceptance criterion that ran
CRITERIA = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        CRITERIA.append((number, passed, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(line)
