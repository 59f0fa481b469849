import pytest

from expweb.expsum import ExpSum


@pytest.fixture
def g():
    return ExpSum.cos_plus_cosh()


@pytest.fixture
def e1():
    return ExpSum.equal(1)


WEB_FAMILIES = {
    "cosx": ExpSum.cos_plus_cosh(),
    "en:3": ExpSum.equal(3),
    "en:5": ExpSum.equal(5),
}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
