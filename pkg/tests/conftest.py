import numpy as np
import pytest
from hypothesis import settings

from ddheat.dataset import LineOracle, Scaling
from ddheat.mesh import Tag, generate_structured_square
from ddheat.scenarios import EXPHAT_TAGS, ExpHat

settings.register_profile("ddheat", max_examples=25, deadline=None)
settings.load_profile("ddheat")


@pytest.fixture
def unit_square():
    def make(n, order=1, tags=None):
        return generate_structured_square(n, (0.0, 1.0, 0.0, 1.0), tags or EXPHAT_TAGS, order)
    return make


@pytest.fixture
def hat():
    return ExpHat(1.0)


@pytest.fixture
def oracle():
    return LineOracle(1.0, Scaling(1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def all_dirichlet():
    return {s: Tag.DIRICHLET_T for s in ("bottom", "right", "top", "left")}


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
