import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nehari_lab.energy import ProblemParams
from nehari_lab.fibering import Exponents
from nehari_lab.fields import GridSpec, PotentialSpec

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid1():
    return GridSpec()


@pytest.fixture(scope="session")
def grid2():
    return GridSpec(dim=2, half_width=8.0, points_per_dim=64)


@pytest.fixture(scope="session")
def params1(grid1):
    return ProblemParams(Exponents(1.2, 1.5, 2.0, 2.0), lam=0.3, grid=grid1)


@pytest.fixture(scope="session")
def params2(grid2):
    pot = PotentialSpec(gamma=1.5)
    return ProblemParams(Exponents(1.2, 1.5, 1.5, 1.5), lam=0.3, grid=grid2, pots=(pot, pot))


@pytest.fixture(scope="session")
def params_pq(grid1):
    return ProblemParams(Exponents(1.5, 1.5, 1.5, 1.5), lam=0.1, grid=grid1)
