import pytest

# Criterion number -> (passed, detail), filled in by the acceptance suite.
ACCEPTANCE_REPORT: dict = {}


@pytest.fixture
def acceptance_report():
    def record(number, passed, detail):
        ACCEPTANCE_REPORT[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_REPORT):
        passed, detail = ACCEPTANCE_REPORT[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
