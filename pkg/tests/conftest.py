import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# One PASS/FAIL line per acceptance criterion, printed after the run.
# Tests attach details with record_property("detail", ...).
ACCEPTANCE_LINES = []


def _criterion(report):
    name = report.nodeid.split("::")[-1]
    return name[len("test_"):].replace("_", " ")


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        details = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
        status = "PASS" if report.passed else "FAIL"
        line = f"{status} {_criterion(report)}"
        ACCEPTANCE_LINES.append(line + (f": {details}" if details else ""))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
