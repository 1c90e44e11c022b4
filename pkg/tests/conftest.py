import pytest

# Lines recorded by the acceptance module, echoed at the end of the run so
# they appear in the terminal summary even when output capture is on.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_line():
    def record(ok: bool, label: str, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
