import pytest
from hypothesis import HealthCheck, settings

from zfhgm.channel import correlation_for, scenario_spec

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def a1():
    spec = scenario_spec("A1")
    return spec, correlation_for(spec)


@pytest.fixture(scope="session")
def c2():
    spec = scenario_spec("C2")
    return spec, correlation_for(spec)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split()[0]), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line("criterion %-14s %s  %s" % (key, "PASS" if ok else "FAIL", detail))
