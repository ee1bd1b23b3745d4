import pytest

from ruelle_lab.cones import suspension_derivative_transpose, toral_suspension_cone_system
from ruelle_lab.models import CAT_MAP, ToralSuspension, enumerate_orbits_suspension
from ruelle_lab.multiplier_bank import AngularPartition, WeightSpec


@pytest.fixture(scope="session")
def cat():
    return ToralSuspension(CAT_MAP, 1.0)


@pytest.fixture(scope="session")
def cat_orbits(cat):
    return enumerate_orbits_suspension(cat, 40)


@pytest.fixture(scope="session")
def cat_cones():
    return toral_suspension_cone_system(CAT_MAP, 4)


@pytest.fixture(scope="session")
def cat_dt2():
    return suspension_derivative_transpose(CAT_MAP, 2)


@pytest.fixture(scope="session")
def bank(cat_cones):
    """(spec, angular) for d = 2, r = 4, alpha = 0.4 on the cat cone system."""
    return WeightSpec(0.4, 4, 2), AngularPartition(cat_cones)


# ---------------------------------------------------------------- acceptance summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or not (rep.when == "call" or rep.failed):
        return
    n, title = m.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}  {title}: {detail}")
