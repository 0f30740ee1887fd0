import numpy as np
import pytest

from radweight import atomize, geometry, weight

ACCEPTANCE_LINES = []


def record(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pow_inv():
    return weight.pow_inv()


@pytest.fixture(scope="session")
def beta():
    return weight.fock()


@pytest.fixture(scope="session")
def disc_rings(pow_inv):
    # capped at N_k <= 10^6; reaches 1 - r of about 2e-4
    return atomize.build_rings(pow_inv, 1 - 1e-9, max_points=10**6)


@pytest.fixture(scope="session")
def disc_lattice(disc_rings):
    return geometry.Lattice(disc_rings)


@pytest.fixture(scope="session")
def plane_rings(beta):
    return atomize.build_rings(beta, 900.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20261014)
