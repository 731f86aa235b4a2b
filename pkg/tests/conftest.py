import numpy as np
import pytest

from eitcone.mesh import build_structured_mesh
from eitcone.operator import build_boundary_basis


@pytest.fixture(scope="session")
def mesh8():
    return build_structured_mesh(8)


@pytest.fixture(scope="session")
def basis8(mesh8):
    return build_boundary_basis(mesh8, 8)


@pytest.fixture(scope="session")
def mesh4():
    return build_structured_mesh(4)


@pytest.fixture(scope="session")
def basis4(mesh4):
    return build_boundary_basis(mesh4, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one verdict line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, passed: bool, text: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {text}"
        _ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[number])
