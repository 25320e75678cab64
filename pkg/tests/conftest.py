from pathlib import Path

import numpy as np
import pytest

from gpfv.harness import resolve_mesh
from gpfv.mesh import generate_uniform_rectangle_mesh

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def two_cell():
    return generate_uniform_rectangle_mesh(2, 1, 2.0, 1.0)


@pytest.fixture(scope="session")
def square8():
    return generate_uniform_rectangle_mesh(8, 8)


@pytest.fixture(scope="session")
def disk():
    return resolve_mesh("disk")


@pytest.fixture(scope="session")
def disk_coarse():
    return resolve_mesh("disk-coarse")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_field(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
