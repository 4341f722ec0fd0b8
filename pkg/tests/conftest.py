import os
import sys

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


_ACCEPTANCE_RAN = set()


def pytest_runtest_logreport(report):
    name = report.nodeid.rpartition("::")[2]
    if "test_acceptance" in report.nodeid and name.startswith("test_c"):
        _ACCEPTANCE_RAN.add(int(name[6:8]))


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not _ACCEPTANCE_RAN:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE_RAN):
        line = acc.RESULTS.get(key, f"criterion {key:>2}: FAIL  did not run to completion")
        terminalreporter.write_line(line)
