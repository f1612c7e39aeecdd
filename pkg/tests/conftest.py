import pytest

CRITERIA: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; the assertion is left to the caller."""

    def add(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
        print(line)
        CRITERIA.append(line)
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
