"""Radial global solutions.

Claims:
    - the n=1 solve reproduces the explicit bubble -2 log(1 + r^2/8):
      sigma = 4, m = 4, D = log 64, profile to 1e-6 on [0, 100]
    - the symmetric antidiagonal system reduces to two copies of the bubble
    - the exact scaling family: shifting all heights by c rescales radii and
      leaves sigma unchanged, shifts D by (c/2) m
    - Pohozaev identities (linear and inverse-quadratic) hold to 1e-8/1e-7
      for every successful summary
    - the mass dichotomy m_min < 4 or all m_i = 4
    - sigma_i falls strictly when alpha_i rises
    - far-field expansion: constant and r^{2-m_j} correction fits, residual
      decay faster than the kept term
    - error paths: nonintegrable tails, corrupted tails, bad inputs
"""

import numpy as np
import pytest

import liouville_toolkit as lt
from liouville_toolkit.errors import (InconsistentTailError, InputError,
                                      NonintegrableError)
from liouville_toolkit.radial_solver import HeightVector

from conftest import random_admissible_matrix


def bubble(r):
    return -2.0 * np.log(1.0 + r ** 2 / 8.0)


# -- scalar oracle ------------------------------------------------------------

def test_scalar_summary_values(scalar_solution):
    _, summ = scalar_solution
    assert summ.sigma[0] == pytest.approx(4.0, abs=1e-8)
    assert summ.m[0] == pytest.approx(4.0, abs=1e-8)
    assert summ.D[0] == pytest.approx(np.log(64.0), abs=1e-8)
    assert summ.pohozaev_defect < 1e-10


def test_scalar_profile_matches_bubble(scalar_solution):
    profile, _ = scalar_solution
    sel = profile.grid <= 100.0
    rr = profile.grid[sel]
    assert np.abs(profile.U[0, sel] - bubble(rr)).max() < 1e-6


def test_scalar_dense_interp(scalar_solution):
    profile, _ = scalar_solution
    rr = np.array([0.0, 3e-3, 0.5, 7.0, 1e3])
    vals = profile.interp(rr)[0]
    assert np.abs(vals - bubble(rr)).max() < 1e-6


# -- symmetry reduction -------------------------------------------------------

def test_antidiag_reduces_to_bubble(A_antidiag):
    profile = lt.integrate(A_antidiag, [0.0, 0.0])
    assert np.abs(profile.U[0] - profile.U[1]).max() < 1e-12
    sel = profile.grid <= 100.0
    assert np.abs(profile.U[0, sel] - bubble(profile.grid[sel])).max() < 1e-6
    summ = lt.summarize(A_antidiag, profile)
    assert np.allclose(summ.sigma, 4.0, atol=1e-8)


# -- scaling family -----------------------------------------------------------

def test_height_shift_rescales_profile(A_coupled):
    base = lt.integrate(A_coupled, [0.0, 0.7])
    shifted = lt.integrate(A_coupled, [1.0, 1.7])
    # U_shifted(e^{1/2} r) + 1 = U_base(r)
    rr = np.geomspace(0.1, 1e3, 40)
    lhs = shifted.interp(np.exp(0.5) * rr) + 1.0
    rhs = base.interp(rr)
    assert np.abs(lhs - rhs).max() < 1e-8


@pytest.mark.parametrize("c", [-1.0, 0.5, 2.0])
def test_height_shift_preserves_sigma_and_shifts_D(A_coupled, c):
    _, s0 = lt.solve_global(A_coupled, [0.0, 0.4])
    _, s1 = lt.solve_global(A_coupled, [c, 0.4 + c])
    assert np.abs(s1.sigma - s0.sigma).max() < 1e-8
    assert np.abs(s1.D - (s0.D + 0.5 * c * s0.m)).max() < 1e-6


def test_scalar_shift_D_closed_form(A_scalar):
    _, s1 = lt.solve_global(A_scalar, [0.8])
    assert s1.D[0] == pytest.approx(np.log(64.0) + 2 * 0.8, abs=1e-8)


# -- Pohozaev and dichotomy ---------------------------------------------------

def test_pohozaev_random_systems():
    rng = np.random.default_rng(42)
    checked = 0
    for trial in range(14):
        n = 2 if trial % 2 == 0 else 3
        A = random_admissible_matrix(rng, n)
        alpha = rng.uniform(0.0, 1.0, n)
        alpha -= alpha.min()
        try:
            _, summ = lt.solve_global(A, alpha)
        except NonintegrableError:
            continue
        checked += 1
        assert summ.pohozaev_defect < 1e-8
        half = (summ.m - 2.0) / 2.0
        quad = abs((A.a_inv * np.outer(half, half)).sum() - A.a_inv.sum())
        assert quad < 1e-7
        # dichotomy
        assert summ.m_min < 4.0 - 1e-5 or np.abs(summ.m - 4.0).max() < 1e-5
    assert checked >= 8


def test_sigma_strictly_decreasing_in_height(A_coupled):
    vals = [lt.solve_global(A_coupled, [0.0, a2])[1].sigma[1]
            for a2 in (0.0, 0.3, 0.9)]
    assert vals[0] > vals[1] > vals[2]


# -- expansion ----------------------------------------------------------------

def test_expansion_scalar_correction(A_scalar, scalar_solution):
    profile, summ = scalar_solution
    rep = lt.expansion_residual(A_scalar, summ, profile, (1e3, 1e5))
    # kept correction at r = 1e3 is -16/r^2 = -1.6e-5; residual below 5% of it
    assert rep.correction_model_at[0] == pytest.approx(-16.0 / 1e6, rel=1e-3)
    assert rep.sup_residual[0] < 0.05 * abs(rep.correction_model_at[0])
    assert abs(rep.const_fit[0] - np.log(64.0)) < 1e-3


def test_expansion_coupled_fit(A_coupled, coupled_solution):
    profile, summ = coupled_solution
    rep = lt.expansion_residual(A_coupled, summ, profile, (1e3, 1e5))
    assert np.abs(rep.const_fit - rep.const_model).max() < 1e-3
    rel = np.abs(rep.correction_fit_at - rep.correction_model_at) \
        / np.abs(rep.correction_model_at)
    assert rel.max() < 0.05


def test_expansion_residual_decays_faster_than_kept_term(A_coupled):
    # lower window where the next-order remainder dominates solver noise
    profile = lt.integrate(A_coupled, [0.0, 0.8], r_max=1e4, tol=1e-12)
    summ = lt.summarize(A_coupled, profile)
    assert summ.m_min < 4.0
    rep = lt.expansion_residual(A_coupled, summ, profile, (1e2, 10 ** 3.5))
    assert np.all(rep.decay_exponent <= 2.0 - summ.m_min)


def test_expansion_window_validation(A_scalar, scalar_solution):
    profile, summ = scalar_solution
    with pytest.raises(InputError):
        lt.expansion_residual(A_scalar, summ, profile, (10.0, 1e5))


# -- error paths --------------------------------------------------------------

def test_nonintegrable_error(A_antidiag):
    with pytest.raises(NonintegrableError):
        lt.solve_global(A_antidiag, [0.0, 0.6])


def test_corrupted_tail_rejected(A_scalar):
    profile = lt.integrate(A_scalar, [0.0])
    profile.dU[:, -1] *= 1.5  # tail slope no longer matches the masses
    with pytest.raises((InconsistentTailError, NonintegrableError)):
        lt.summarize(A_scalar, profile)


def test_integrate_input_validation(A_scalar):
    with pytest.raises(InputError):
        lt.integrate(A_scalar, [0.0], r_max=10.0)
    with pytest.raises(InputError):
        lt.integrate(A_scalar, [0.0], tol=0.5)
    with pytest.raises(InputError):
        lt.integrate(A_scalar, [0.0, 0.0])


def test_height_vector_gauge():
    hv = HeightVector.from_hat([0.3, 1.2])
    assert hv.alpha[0] == 0.0
    with pytest.raises(InputError):
        HeightVector(np.array([0.5, 1.0]))
