import pytest

from hbg2dfg.dfg import det_dfg
from hbg2dfg.pipeline import construct, fixture_text, load_fixture


@pytest.fixture(scope="session")
def circuit():
    return load_fixture("circuit")


@pytest.fixture(scope="session")
def sps():
    return load_fixture("sps")


@pytest.fixture(scope="session")
def circuit_run(circuit):
    return construct(circuit)


@pytest.fixture(scope="session")
def sps_run(sps):
    return construct(sps)


@pytest.fixture(scope="session")
def det():
    return det_dfg()


@pytest.fixture(scope="session")
def circuit_text():
    return fixture_text("circuit")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
