import pytest

from qst_exchange.core import DeviceParams, SpinState

_ACCEPTANCE = {}


@pytest.fixture
def baseline_params():
    return DeviceParams(omega_e=0.0, omega_1=0.0, omega_2=0.0, omega_j=0.04, delta=0.8, gamma_h=0.8)


@pytest.fixture
def spin_up():
    return SpinState.up()


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid or "::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        detail = dict(report.user_properties).get("measured", "")
        _ACCEPTANCE[name] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        outcome, detail = _ACCEPTANCE[name]
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}  {detail}")
