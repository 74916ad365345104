"""Prints one pass/fail line per acceptance criterion after the run."""

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.outcome != "passed":
        outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        detail = dict(report.user_properties).get("detail", "")
        if _acceptance.get(name, ("PASS",))[0] == "PASS":
            _acceptance[name] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, (outcome, detail) in _acceptance.items():
        line = f"{outcome}  {name}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
