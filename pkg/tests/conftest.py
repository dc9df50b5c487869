import pytest

_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Register the outcome of an acceptance test under its criterion number."""
    def register(number, title):
        _ACCEPTANCE.setdefault(number, {"title": title, "nodes": []})["nodes"].append(request.node.nodeid)
    return register


def pytest_runtest_logreport(report):
    if report.when != "call" and not report.failed:
        return
    for entry in _ACCEPTANCE.values():
        if report.nodeid in entry["nodes"]:
            entry.setdefault("outcomes", {})[report.nodeid] = report.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        outcomes = entry.get("outcomes", {})
        ok = bool(outcomes) and all(outcomes.values()) and len(outcomes) == len(entry["nodes"])
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {number}: {entry['title']}")
