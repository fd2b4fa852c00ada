import numpy as np
import pytest

from hhfreak.detector import detect
from hhfreak.pipeline import warm_up
from hhfreak.synthetic import poster_image


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    warm_up()


@pytest.fixture
def rng():
    return np.random.default_rng(20161021)


@pytest.fixture(scope="session")
def posters():
    return poster_image()


@pytest.fixture(scope="session")
def poster_detection(posters):
    return detect(posters)


# one pass/fail line per acceptance criterion
_acceptance: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        doc = getattr(report, "acceptance_title", report.nodeid.split("::")[-1])
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome.upper(), doc))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.function.__doc__:
        rep.acceptance_title = item.function.__doc__.strip().splitlines()[0]


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, title in _acceptance:
        terminalreporter.write_line(f"{outcome:<6} {name}: {title}")
