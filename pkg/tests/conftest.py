import pytest

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion number and title")


@pytest.fixture
def report(request):
    """Attach a one-line measurement to the current criterion's summary line."""
    marker = request.node.get_closest_marker("criterion")

    def note(text):
        _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1]}).setdefault("notes", []).append(text)

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    entry = _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1]})
    entry["passed"] = entry.get("passed", True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        status = "PASS" if e.get("passed") else "FAIL"
        notes = "; ".join(e.get("notes", []))
        tr.write_line(f"[{status}] {num:>2}. {e['title']}" + (f" ({notes})" if notes else ""))
