"""Shared fixtures: reference matrices, cached radial solves, and the
acceptance summary printer (one PASS/FAIL line per criterion at session end).
"""

import numpy as np
import pytest
from hypothesis import settings

import liouville_toolkit as lt

settings.register_profile("suite", max_examples=25, deadline=None)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def A_scalar():
    return lt.InteractionMatrix.from_array([[1.0]])


@pytest.fixture(scope="session")
def A_antidiag():
    return lt.InteractionMatrix.from_array([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture(scope="session")
def A_coupled():
    return lt.InteractionMatrix.from_array([[1.0, 2.0], [2.0, 1.0]])


@pytest.fixture(scope="session")
def A_three():
    return lt.InteractionMatrix.from_array(
        [[0.3, 1.0, 1.0], [1.0, 0.3, 1.0], [1.0, 1.0, 0.3]])


@pytest.fixture(scope="session")
def scalar_solution(A_scalar):
    return lt.solve_global(A_scalar, [0.0])


@pytest.fixture(scope="session")
def coupled_solution(A_coupled):
    """m < 4 reference case used across modules."""
    return lt.solve_global(A_coupled, [0.0, 0.8])


def random_admissible_matrix(rng, n):
    """Random symmetric coupling with the inverse-sign interaction condition."""
    for _ in range(200):
        B = rng.uniform(0.3, 2.0, size=(n, n))
        a = 0.5 * (B + B.T)
        a = np.diag(np.diag(a)) * 0.3 + (a - np.diag(np.diag(a)))
        try:
            inv = np.linalg.inv(a)
        except np.linalg.LinAlgError:
            continue
        if (np.all(np.diag(inv) <= 0.0)
                and np.all(inv - np.diag(np.diag(inv)) >= -1e-12)
                and np.all(inv.sum(axis=1) >= -1e-12)):
            return lt.InteractionMatrix.from_array(a)
    raise RuntimeError("no admissible matrix found")


# ---------------------------------------------------------------- acceptance

_ACCEPTANCE = {}


def note_criterion(number, description, passed):
    _ACCEPTANCE[number] = (description, passed)


@pytest.fixture
def criterion():
    """Context manager recording a criterion outcome for the summary."""
    import contextlib

    @contextlib.contextmanager
    def _cm(number, description):
        try:
            yield
        except BaseException:
            note_criterion(number, description, False)
            raise
        note_criterion(number, description, True)

    return _cm


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        desc, ok = _ACCEPTANCE[num]
        terminalreporter.write_line(
            f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {desc}")
