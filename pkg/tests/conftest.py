import pytest

ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE.setdefault(number, []).append(line)
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            for line in ACCEPTANCE[k]:
                terminalreporter.write_line(line)
