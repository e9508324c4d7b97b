"""Height-to-mass map.

Claims:
    - the symmetric antidiagonal case lands on sigma = (4, 4) at alpha_hat=0
    - the n=1 map is the constant 4
    - sigma_2 decreases when alpha_2 grows
    - the Jacobian is stable under step halving and nonsingular
    - Newton inversion round-trips and recovers the symmetric point
    - targets off the Pohozaev surface are rejected with the defect attached
"""

import numpy as np
import pytest

import liouville_toolkit as lt
from liouville_toolkit.errors import PohozaevSurfaceError
from liouville_toolkit.mass_map import pohozaev_defect, worker_count


def test_symmetric_point(A_antidiag):
    sigma = lt.sigma_of_alpha(A_antidiag, [0.0])
    assert np.allclose(sigma, 4.0, atol=1e-8)


def test_scalar_map_constant(A_scalar):
    sigma = lt.sigma_of_alpha(A_scalar, [])
    assert sigma[0] == pytest.approx(4.0, abs=1e-8)


def test_monotone_in_height(A_coupled):
    s0 = lt.sigma_of_alpha(A_coupled, [0.0])
    s1 = lt.sigma_of_alpha(A_coupled, [0.3])
    assert s1[1] < s0[1]


def test_jacobian_step_stability(A_coupled):
    J1 = lt.jacobian(A_coupled, [0.4], h_step=1e-3)
    J2 = lt.jacobian(A_coupled, [0.4], h_step=5e-4)
    assert abs(J1.det) > 1e-3
    rel = np.abs(J1.jacobian - J2.jacobian).max() / np.abs(J1.jacobian).max()
    assert rel < 1e-4


def test_jacobian_three_components(A_three):
    s = lt.jacobian(A_three, [0.5, 1.0])
    assert s.jacobian.shape == (2, 2)
    assert abs(s.det) > 1e-6
    assert s.cond < 1e8


def test_jacobian_step_bounds(A_coupled):
    with pytest.raises(Exception):
        lt.jacobian(A_coupled, [0.4], h_step=1.0)


def test_invert_roundtrip(A_coupled):
    rng = np.random.default_rng(9)
    for _ in range(2):
        ah_true = rng.uniform(0.0, 1.0, 1)
        target = lt.sigma_of_alpha(A_coupled, ah_true)
        ah = lt.invert(A_coupled, target, alpha0=[0.5])
        assert np.abs(ah - ah_true).max() < 1e-8


def test_invert_symmetric_target(A_antidiag):
    ah = lt.invert(A_antidiag, [4.0, 4.0], alpha0=[0.05])
    assert abs(ah[0]) < 1e-8


def test_invert_rejects_off_surface_target(A_coupled):
    good = lt.sigma_of_alpha(A_coupled, [0.5])
    bad = good * np.array([1.01, 1.0])
    assert pohozaev_defect(A_coupled, bad) > 1e-6
    with pytest.raises(PohozaevSurfaceError) as exc:
        lt.invert(A_coupled, bad)
    assert exc.value.defect > 1e-6


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("TOOLKIT_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(tasks=2) == 2
