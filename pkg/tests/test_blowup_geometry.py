"""Blowup configurations and location equations.

Claims:
    - constant weights: single point has zero residual; the half-period pair
      is critical to roundoff; translations leave residual norms unchanged
    - the closed-form residual for h = exp(cos 2 pi x1)
    - the residual is the gradient of the interaction energy (FD check)
    - Newton recovers the half-period pair and weight-minimum points
    - colliding points raise; singular gauge raises
    - interaction heights and weight ratios: symmetry, scaling invariance,
      cross-component consistency warning
"""

import numpy as np
import pytest

import liouville_toolkit as lt
from liouville_toolkit.blowup_geometry import (CompatibilityWarning,
                                               half_period_pair,
                                               interaction_energy,
                                               uniform_configuration)
from liouville_toolkit.errors import (ConfigurationError,
                                      DegenerateConfigurationError, MergeError)
from liouville_toolkit.weights import (TrigPolynomial, WeightFunction,
                                       constant_weight)


def exp_cos_weight(amp=1.0, axis=0):
    k = (1, 0) if axis == 0 else (0, 1)
    return WeightFunction(TrigPolynomial(0.0, [(k, amp, 0.0)]), "exp")


# -- residuals ----------------------------------------------------------------

def test_single_point_constant_weight_zero():
    cfg = uniform_configuration([4.0], 1)
    assert np.abs(lt.location_residual(cfg)).max() == 0.0


def test_half_period_pair_critical():
    cfg = uniform_configuration([4.0], 2)
    assert np.abs(lt.location_residual(cfg)).max() < 1e-8


def test_translation_invariance_constant_weights():
    rng = np.random.default_rng(3)
    shift = rng.random(2)
    pts = half_period_pair()
    cfg0 = uniform_configuration([4.0], 2, points=pts + 0.07)
    cfg1 = uniform_configuration([4.0], 2, points=(pts + 0.07 + shift) % 1.0)
    r0 = np.linalg.norm(lt.location_residual(cfg0), axis=1)
    r1 = np.linalg.norm(lt.location_residual(cfg1), axis=1)
    assert np.abs(np.sort(r0) - np.sort(r1)).max() < 1e-10


def test_exp_cosine_closed_form():
    w = exp_cos_weight()
    for x1 in (0.1, 0.37, 0.5):
        cfg = lt.BlowupConfiguration(points=[[x1, 0.33]], masses=[4.0],
                                     weights=(w,))
        R = lt.location_residual(cfg)
        expected = np.array([-2 * np.pi * np.sin(2 * np.pi * x1), 0.0])
        assert np.abs(R[0] - expected).max() < 1e-12
    for x1 in (0.0, 0.5):
        cfg = lt.BlowupConfiguration(points=[[x1, 0.33]], masses=[4.0],
                                     weights=(w,))
        assert np.abs(lt.location_residual(cfg)).max() < 1e-12


def test_residual_is_energy_gradient():
    w1 = exp_cos_weight(0.4, 0)
    w2 = exp_cos_weight(0.3, 1)
    pts = np.array([[0.18, 0.42], [0.63, 0.87]])
    cfg = lt.BlowupConfiguration(points=pts, masses=[3.1, 4.9],
                                 weights=(w1, w2))
    R = lt.location_residual(cfg)
    h = 1e-6
    for t in range(2):
        for c in range(2):
            pp = pts.copy()
            pp[t, c] += h
            ep = interaction_energy(lt.BlowupConfiguration(
                points=pp, masses=[3.1, 4.9], weights=(w1, w2)))
            pp[t, c] -= 2 * h
            em = interaction_energy(lt.BlowupConfiguration(
                points=pp, masses=[3.1, 4.9], weights=(w1, w2)))
            assert (ep - em) / (2 * h) == pytest.approx(R[t, c], abs=1e-6)


def test_component_weighted_variant():
    cfg = uniform_configuration([4.0, 4.0], 2)
    r_plain = lt.location_residual(cfg)
    r_weighted = lt.location_residual(cfg, component_weights=[2.0, 2.0])
    assert np.allclose(2.0 * r_plain, r_weighted)


# -- solving ------------------------------------------------------------------

def test_solve_recovers_half_period_pair():
    rng = np.random.default_rng(1)
    init = half_period_pair() + rng.normal(0.0, 0.03, (2, 2))
    cfg, iters = lt.solve_locations((constant_weight(),), [4.0], 2, init)
    assert iters <= 10
    assert np.abs(lt.location_residual(cfg)).max() < 1e-9
    d = cfg.points[1] - cfg.points[0]
    d -= np.round(d)
    assert np.abs(np.abs(d) - 0.5).max() < 1e-8


def test_solve_finds_weight_critical_point():
    # single bubble: residual reduces to grad log h; h = exp(-cos...) has a
    # nondegenerate interior critical point at (1/2, 1/2)
    w = WeightFunction(TrigPolynomial(0.0, [((1, 0), 0.4, 0.0),
                                            ((0, 1), 0.25, 0.0)]), "exp")
    cfg, _ = lt.solve_locations((w,), [4.0], 1, [[0.42, 0.56]])
    assert np.abs(cfg.points[0] - 0.5).max() < 1e-9


def test_colliding_init_raises():
    with pytest.raises((MergeError, ConfigurationError)):
        lt.solve_locations((constant_weight(),), [4.0], 2,
                           [[0.3, 0.3], [0.3, 0.3]])


def test_free_gauge_with_constant_weights_degenerate():
    init = half_period_pair()
    init[1] += [0.02, -0.015]
    with pytest.raises(DegenerateConfigurationError):
        lt.solve_locations((constant_weight(),), [4.0], 2, init, gauge="free")


# -- coefficients -------------------------------------------------------------

def test_heights_and_ratios_half_period():
    cfg = uniform_configuration([4.0], 2)
    rep = lt.coefficient_report(cfg)
    assert rep.H[0, 0] == pytest.approx(rep.H[0, 1], abs=1e-13)
    assert np.allclose(rep.c, 1.0, atol=1e-13)
    assert rep.h_defect[0] < 1e-10


def test_ratio_scale_invariance():
    w = exp_cos_weight(0.3)
    pts = np.array([[0.2, 0.2], [0.7, 0.7]])
    cfg1 = lt.BlowupConfiguration(points=pts, masses=[3.3], weights=(w,))
    cfg2 = lt.BlowupConfiguration(points=pts, masses=[3.3],
                                  weights=(w.scaled(2.0),))
    r1 = lt.coefficient_report(cfg1)
    r2 = lt.coefficient_report(cfg2)
    assert np.abs(r1.c - r2.c).max() < 1e-14


def test_inconsistent_ratios_warn():
    # equal masses but different weights: c_t disagrees across components
    w1 = exp_cos_weight(0.5, 0)
    w2 = exp_cos_weight(0.5, 1)
    pts = np.array([[0.2, 0.31], [0.64, 0.72]])
    cfg = lt.BlowupConfiguration(points=pts, masses=[4.0, 4.0],
                                 weights=(w1, w2))
    with pytest.warns(CompatibilityWarning):
        rep = lt.coefficient_report(cfg)
    assert rep.c_spread > 1e-6


def test_minimum_separation_enforced():
    with pytest.raises(ConfigurationError):
        lt.BlowupConfiguration(points=[[0.5, 0.5], [0.5, 0.5005]],
                               masses=[4.0], weights=(constant_weight(),))
