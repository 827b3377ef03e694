"""Acceptance bookkeeping: tests marked ``criterion(n)`` record a verdict per criterion,
and the terminal summary prints one PASS/FAIL line for each."""

import pytest

CRITERIA = {
    1: "heat-equation oracle",
    2: "Barenblatt oracle",
    3: "characteristics identities",
    4: "weighted L1 contraction",
    5: "energy identity",
    6: "positivity",
    7: "eps,eta-Cauchy",
    8: "cocycle restart",
    9: "singular moments",
    10: "weak-form residuals",
    11: "fBM covariance",
}

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def acceptance(request):
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0]

    def record(passed, detail):
        _RESULTS.setdefault(number, []).append((bool(passed), f"[{request.node.name}] {detail}"))
        return bool(passed)

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not rep.failed or rep.when == "teardown":
        return
    recorded = any(item.name in d for _, d in _RESULTS.get(marker.args[0], []))
    if not recorded:
        msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
        _RESULTS.setdefault(marker.args[0], []).append(
            (False, f"[{item.name}] no result recorded: {type(call.excinfo.value).__name__}: {msg}"))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, name in CRITERIA.items():
        entries = _RESULTS.get(number)
        if not entries:
            tr.write_line(f"criterion {number:2d} {name}: NOT RUN")
            continue
        status = "PASS" if all(ok for ok, _ in entries) else "FAIL"
        tr.write_line(f"criterion {number:2d} {name}: {status}")
        for ok, detail in entries:
            tr.write_line(f"    {'ok  ' if ok else 'FAIL'} {detail}")
