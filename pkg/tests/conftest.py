from collections import defaultdict

CRITERIA = {
    1: "gradient exactness (10 MLPs vs central differences)",
    2: "single-atom oracle and RK4 pushforward",
    3: "two-atom transport consistency (exact W2)",
    4: "Euler / RK4 convergence orders",
    5: "sphere d=2 D=4 table row",
    6: "torus d=2 D=6 table row",
    7: "floral figure reproduction",
    8: "velocity error grows toward t = 1",
    9: "W2 decreases with sample size",
    10: "invariant suites",
}

_nodes = {}
_outcomes = defaultdict(list)
_notes = defaultdict(list)
_durations = defaultdict(float)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _nodes[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    n = _nodes.get(report.nodeid)
    if n is None:
        return
    _durations[n] += report.duration
    if report.when == "call" or report.outcome != "passed":
        _outcomes[n].append(report.outcome)
    if report.when == "call":
        _notes[n].extend(v for k, v in report.user_properties if k == "measured")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in _outcomes:
            continue
        ok = all(o == "passed" for o in _outcomes[n])
        line = f"{'PASS' if ok else 'FAIL'}  criterion {n:2d}: {CRITERIA[n]}  [{_durations[n]:.1f}s]"
        if _notes[n]:
            line += "  " + "; ".join(_notes[n])
        tr.write_line(line)
