import numpy as np
import pytest

from gelwrinkle import constitutive as cm
from gelwrinkle.assembly import Model
from gelwrinkle.mesh import FILM, SUBSTRATE, build_rectangle_bilayer
from helpers import random_state


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


@pytest.fixture(scope="session")
def bilayer_params():
    return {SUBSTRATE: cm.MaterialParams(gamma=0.1), FILM: cm.MaterialParams(gamma=0.8)}


@pytest.fixture(scope="session")
def small_mesh():
    """4 x (2 + 2) element flat bilayer: 16 elements, 25 nodes, 40 edges."""
    return build_rectangle_bilayer(2.0, 0.5, 0.01, 4, 2, 2)


@pytest.fixture(scope="session")
def small_model(small_mesh, bilayer_params):
    return Model(small_mesh, bilayer_params)


@pytest.fixture
def make_state(rng):
    return lambda n, amp=0.1: random_state(rng, n, amp)


# -- acceptance summary --------------------------------------------------------

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance criteria; lines are printed in the terminal summary."""

    def record(criterion, ok, detail=""):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
