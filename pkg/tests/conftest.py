"""Prints one pass/fail line per acceptance criterion at the end of the run."""

_OUTCOMES: dict[str, tuple[str, str, float]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    if report.when == "call" or report.failed:
        prev_status, _, prev = _OUTCOMES.get(key, ("PASS", "", 0.0))
        # a parametrized criterion passes only if every case passes
        status = "PASS" if report.passed and prev_status == "PASS" else "FAIL"
        _OUTCOMES[key] = (status, props.get("title", ""), prev + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_OUTCOMES, key=int):
        status, title, seconds = _OUTCOMES[key]
        terminalreporter.write_line(f"criterion {key}: {status}  {title} ({seconds:.2f} s)")
