import pytest

from tracefluct.ensemble import make_distribution


@pytest.fixture(scope="session")
def rademacher():
    return make_distribution("rademacher", max_order=12)


@pytest.fixture(scope="session")
def normal():
    return make_distribution("normal", max_order=12)


@pytest.fixture(scope="session")
def kurtotic():
    # mu_4 = 9: far from Gaussian in the fourth moment
    return make_distribution("discrete:-3,1/18;0,8/9;3,1/18", max_order=12)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
