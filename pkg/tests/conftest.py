import pytest

_VERDICTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line, then fail the test if the check did not hold."""

    def record(name: str, ok: bool, detail: str) -> None:
        _VERDICTS[name] = (bool(ok), detail)
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance")
    for name in sorted(_VERDICTS):
        ok, detail = _VERDICTS[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
