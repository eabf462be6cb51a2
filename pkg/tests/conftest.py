import pathlib

import numpy as np
import pytest

from sdexponent.codes import threaded_generator

REPO = pathlib.Path(__file__).resolve().parent.parent
CODES_DIR = REPO / "codes"

PHI = (1 + 5 ** 0.5) / 2
PHI_BAR = (1 - 5 ** 0.5) / 2


def golden_component_matrix():
    """Unitary 2x2 component code of the Golden code (supplied by the user, not the library)."""
    a = 1 + 1j - 1j * PHI
    a_bar = 1 + 1j - 1j * PHI_BAR
    return np.array([[a, a * PHI], [a_bar, a_bar * PHI_BAR]]) / np.sqrt(5)


def golden_code():
    return threaded_generator(2, thread_gamma=1j, C=golden_component_matrix(), name="golden")


@pytest.fixture
def golden():
    return golden_code()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
