import pytest

_VERDICTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line; the test still asserts on its own."""

    def record(number: int, passed: bool, text: str) -> None:
        _VERDICTS[number] = (bool(passed), text)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, text = _VERDICTS[n]
        terminalreporter.write_line(f"[criterion {n}] {'PASS' if ok else 'FAIL'} {text}")
