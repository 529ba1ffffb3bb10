"""Collects acceptance-criterion outcomes and prints one line per criterion at the end."""

_VERDICTS = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.failed:
        detail = dict(report.user_properties).get("detail", "")
        if report.failed and not detail:
            detail = f"{report.when} error: {str(report.longrepr).strip().splitlines()[-1][:160]}"
        prev = _VERDICTS.get(name)
        if prev is None or prev[0] == "PASS":
            _VERDICTS[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS):
        verdict, detail = _VERDICTS[name]
        label = name[len("test_criterion_"):]
        terminalreporter.write_line(f"{verdict}  {label}  {detail}")
