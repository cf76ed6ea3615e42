import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else "FAIL"
    _LINES.append(f"criterion {mark.args[0]:<4} {status}  {item.name}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def detail(record_property):
    """Attach a short measured-value summary to the acceptance line."""
    def put(text):
        record_property("detail", text)
    return put
