import re

import pytest

_verdicts: dict[int, tuple[str, str]] = {}
_NUMBERED = re.compile(r"test_c(\d+)_")


@pytest.fixture
def verdict():
    """Record a numbered acceptance criterion; the summary prints one line each."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        _verdicts[number] = ("PASS" if ok else "FAIL", f"{title}: {detail}" if detail else title)
        line = f"{_verdicts[number][0]} [{number:2d}] {_verdicts[number][1]}"
        print(line)
        assert ok, line

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    match = _NUMBERED.match(item.name)
    if match and report.when == "call" and report.failed:
        number = int(match.group(1))
        _verdicts.setdefault(number, ("FAIL", f"{item.name}: {call.excinfo.typename}"))


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        status, text = _verdicts[number]
        terminalreporter.write_line(f"{status} [{number:2d}] {text}")
