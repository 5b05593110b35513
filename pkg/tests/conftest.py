import numpy as np
import pytest

from bloch_invariants.lattice import dual_lattice, gamma_delta, parse_lattice
from bloch_invariants.potential import FourierPotential

THREE_MODE = [((1, 0), 0.4), ((0, 1), 0.5), ((1, 1), 0.3)]
FOUR_MODE = THREE_MODE + [((2, 1), 0.2)]


@pytest.fixture(scope="session")
def omega():
    return parse_lattice("cubic:2pi:2")


@pytest.fixture(scope="session")
def dual(omega):
    return dual_lattice(omega)


@pytest.fixture(scope="session")
def gd(dual, omega):
    return gamma_delta(dual, omega, (1, 0))


@pytest.fixture(scope="session")
def q3(dual):
    return FourierPotential.from_modes(dual, THREE_MODE)


@pytest.fixture(scope="session")
def q4(dual):
    return FourierPotential.from_modes(dual, FOUR_MODE)


@pytest.fixture(scope="session")
def q_sep(dual):
    # modes on the line of delta=(1,0) only
    return FourierPotential.from_modes(dual, [((1, 0), 0.4), ((2, 0), 0.15)])


@pytest.fixture(scope="session")
def q0(dual):
    return FourierPotential.zero(dual)


def grid(n, d=2):
    """Uniform n^d grid on [0, 2 pi)^d as an (n^d, d) array."""
    u = 2 * np.pi * np.arange(n) / n
    return np.stack(np.meshgrid(*([u] * d), indexing="ij"), -1).reshape(-1, d)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
