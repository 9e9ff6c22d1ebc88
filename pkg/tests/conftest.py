import pytest

from hoclab.core import canonical
from hoclab.spectral import analyze


@pytest.fixture(scope="session")
def model_f():
    return canonical("F", 512)


@pytest.fixture(scope="session")
def model_f32():
    return canonical("F", 32)


@pytest.fixture(scope="session")
def model_s():
    return canonical("S", 512)


@pytest.fixture(scope="session")
def model_c():
    return canonical("C", 512)


@pytest.fixture(scope="session")
def spec_f(model_f):
    return analyze(model_f)


@pytest.fixture(scope="session")
def spec_f32(model_f32):
    return analyze(model_f32)


@pytest.fixture(scope="session")
def spec_s(model_s):
    return analyze(model_s)


@pytest.fixture(scope="session")
def spec_c(model_c):
    return analyze(model_c)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(LINES):
            terminalreporter.write_line(LINES[number])
