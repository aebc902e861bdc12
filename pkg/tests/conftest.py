import pytest

#: (name, passed, detail) lines reported at the end of the session.
CRITERIA: list[tuple[str, bool, str]] = []


def record(name: str, passed: bool, detail: str) -> None:
    CRITERIA.append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance checks")
    for name, ok, detail in CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")


@pytest.fixture(scope="session")
def record_criterion():
    return record
