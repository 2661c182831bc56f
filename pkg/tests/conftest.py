import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES = []


@pytest.fixture
def detail(request):
    """Collects measured values that go on the acceptance summary line."""
    parts = []
    request.node._criterion_detail = parts
    return parts


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    status = "PASS" if rep.passed else "FAIL"
    info = "; ".join(getattr(item, "_criterion_detail", []))
    line = f"{status} criterion {number:2d}: {title}" + (f" [{info}]" if info else "")
    _LINES.append((number, line))


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
