import pytest

_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance verdict; returns ``ok`` so callers can assert on it."""

    def record(number, title, ok, detail=""):
        verdict = "PASS" if ok else "FAIL"
        if ok is None:
            verdict = "NOT RUN"
        line = f"criterion {number:>2} {verdict}: {title}" + (f" ({detail})" if detail else "")
        _CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
