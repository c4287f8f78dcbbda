import re
from collections import OrderedDict

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)[a-z]?_")
_results: "OrderedDict[int, list[str]]" = OrderedDict()


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _results.setdefault(int(m.group(1)), []).append(report.outcome)


def pytest_deselected(items):
    for item in items:
        m = _CRITERION.search(item.nodeid)
        if m:
            _results.setdefault(int(m.group(1)), []).append("deselected")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        outcomes = _results[n]
        if any(o == "failed" for o in outcomes):
            status = "FAIL"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        elif any(o == "passed" for o in outcomes):
            status = "INCOMPLETE"
        else:
            status = "NOT RUN"
        failed = sum(o == "failed" for o in outcomes)
        missing = sum(o in ("skipped", "deselected") for o in outcomes)
        detail = f" ({failed} of {len(outcomes)} checks failed)" if failed else ""
        if missing and not failed:
            detail = f" ({missing} of {len(outcomes)} checks not run)"
        terminalreporter.write_line(f"criterion {n:2d}: {status}{detail}")
