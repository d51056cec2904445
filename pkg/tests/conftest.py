"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_outcomes: dict[int, bool] = {}
_titles: dict[int, str] = {}
_details: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")


@pytest.fixture
def detail(request):
    """Attach a short measurement summary to the test's criterion line."""
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0]

    def put(text: str) -> None:
        _details.setdefault(number, []).append(text)
        print(f"criterion {number}: {text}")

    return put


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _titles[number] = title
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes[number] = _outcomes.get(number, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        verdict = "PASS" if _outcomes[number] else "FAIL"
        extra = "; ".join(_details.get(number, []))
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {_titles[number]}" + (f" ({extra})" if extra else ""))
