import numpy as np
import pytest

from qusum.states import DensityMatrix


@pytest.fixture
def commuting_pair():
    """sigma = diag(0.9, 0.1), rho = diag(0.5, 0.5)."""
    return DensityMatrix(np.diag([0.9, 0.1]).astype(complex)), DensityMatrix(np.diag([0.5, 0.5]).astype(complex))


def ket_dm(*amps):
    v = np.asarray(amps, dtype=complex)
    v = v / np.linalg.norm(v)
    return DensityMatrix(np.outer(v, v.conj()))


ACCEPTANCE_LINES: dict = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
