"""Torus Green's function.

Claims:
    - the two evaluation routes agree to 1e-10 (they agree to roundoff)
    - symmetry G(x,y) = G(y,x) and the even-kernel structure
    - the Robin constant matches the Euler-Gamma(1/4) closed form and is
      position independent
    - the regular part is continuous across the diagonal; its first-argument
      gradient vanishes on the diagonal
    - analytic gradients match central differences
    - the band-limited grid synthesis has exactly zero mean and its FFT
      Laplacian reproduces the grid delta minus one; pointwise samples agree
      with the synthesis away from the source at the aliasing level
    - G* bookkeeping: diagonal Robin value, symmetric pairs, gradient sums
"""

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

import liouville_toolkit as lt
from liouville_toolkit.errors import ConfigurationError, SingularityError
from liouville_toolkit.torus_green import GreenEvaluator, wrap

EW = GreenEvaluator("ewald")
FO = GreenEvaluator("fourier")

# frozen from the lattice-independent closed form -(1/2pi) log(2 pi eta(i)^2),
# eta(i) = Gamma(1/4) / (2 pi^(3/4))
ROBIN_CLOSED = -0.20857779324350134


def test_robin_closed_form_reproducible():
    eta_i = gamma_fn(0.25) / (2.0 * np.pi ** 0.75)
    assert -np.log(2 * np.pi * eta_i ** 2) / (2 * np.pi) == pytest.approx(
        ROBIN_CLOSED, abs=1e-15)


def test_modes_agree_on_probe_set():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        x, y = rng.random(2), rng.random(2)
        if np.linalg.norm(wrap(x - y)) < 0.05:
            y = (y + 0.5) % 1.0
        worst = max(worst, abs(EW.green(x, y) - FO.green(x, y)))
    assert worst < 1e-10


def test_half_period_value_consistent():
    g1 = EW.green([0.5, 0.5], [0.0, 0.0])
    g2 = FO.green([0.5, 0.5], [0.0, 0.0])
    assert g1 == pytest.approx(g2, abs=1e-12)
    assert g1 == pytest.approx(-0.05515890003816289, abs=1e-10)  # frozen


def test_symmetry_random_pairs():
    rng = np.random.default_rng(6)
    for _ in range(25):
        x, y = rng.random(2), rng.random(2)
        if np.linalg.norm(wrap(x - y)) < 1e-3:
            continue
        assert EW.green(x, y) == pytest.approx(EW.green(y, x), abs=1e-12)


def test_coincident_points_raise():
    with pytest.raises(SingularityError):
        EW.green([0.3, 0.3], [0.3, 0.3])


def test_robin_constants_agree_across_modes():
    assert EW.robin_constant == pytest.approx(ROBIN_CLOSED, abs=1e-12)
    assert FO.robin_constant == pytest.approx(ROBIN_CLOSED, abs=1e-12)


def test_robin_spread_over_positions():
    rng = np.random.default_rng(7)
    vals = [EW.regular_part(x, x) for x in rng.random((100, 2))]
    assert np.ptp(vals) < 1e-10


def test_regular_part_continuity_at_diagonal():
    x = np.array([0.37, 0.81])
    for d in (1e-3, 1e-4):
        off = x + np.array([d, 0.0])
        assert abs(EW.regular_part(x, off) - EW.robin_constant) < 1e-4
        assert abs(FO.regular_part(x, off) - FO.robin_constant) < 1e-4


def test_gradient_matches_central_difference():
    rng = np.random.default_rng(8)
    h = 1e-6
    for ev in (EW, FO):
        for _ in range(6):
            x, y = rng.random(2), rng.random(2)
            if np.linalg.norm(wrap(x - y)) < 0.1:
                y = (y + 0.43) % 1.0
            g = ev.green_grad(x, y)
            fd = np.array([
                (ev.green(x + [h, 0], y) - ev.green(x - [h, 0], y)) / (2 * h),
                (ev.green(x + [0, h], y) - ev.green(x - [0, h], y)) / (2 * h)])
            assert np.abs(g - fd).max() < 1e-7


def test_diagonal_gradient_vanishes():
    # gamma(x, x) constant on the flat torus: grad_1 gamma = 0; probe the
    # regular-part gradient by symmetric differences of G + log correction
    x = np.array([0.21, 0.64])
    h = 1e-5
    vals = []
    for d in ([h, 0], [0, h], [-h, 0], [0, -h]):
        xx = x + d
        vals.append(EW.green(xx, x) + np.log(np.linalg.norm(np.array(d)))
                    / (2 * np.pi))
    g = np.array([(vals[0] - vals[2]) / (2 * h), (vals[1] - vals[3]) / (2 * h)])
    assert np.abs(g).max() < 1e-8


# -- grid fields --------------------------------------------------------------

def test_spectral_grid_zero_mean():
    G = GreenEvaluator.spectral_grid((0.25, 0.5), 256)
    assert abs(G.mean()) < 1e-8


def test_spectral_grid_laplacian_identity():
    M = 256
    y = (64 / M, 117 / M)
    G = GreenEvaluator.spectral_grid(y, M)
    k = np.fft.fftfreq(M, 1.0 / M)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    negLap = np.fft.ifft2(4 * np.pi ** 2 * (K1 ** 2 + K2 ** 2)
                          * np.fft.fft2(G)).real
    target = -np.ones((M, M))
    target[64, 117] += M * M
    i0, j0 = 64, 117
    mask = np.ones((M, M), bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            mask[(i0 + di) % M, (j0 + dj) % M] = False
    rel = np.linalg.norm((negLap - target)[mask]) / np.linalg.norm(target[mask])
    assert rel < 1e-6


def test_pointwise_samples_track_synthesis():
    # aliasing of the log singularity keeps pointwise and band-limited fields
    # within O(M^-2 log M) of each other away from the source
    M = 128
    y = (32 / M, 80 / M)
    G_pt = EW.sample_grid(y, M)
    G_sp = GreenEvaluator.spectral_grid(y, M)
    xs = np.arange(M) / M
    X1, X2 = np.meshgrid(xs, xs, indexing="ij")
    d = np.stack([X1 - y[0], X2 - y[1]], -1)
    far = np.linalg.norm(wrap(d), axis=-1) > 0.2
    assert np.abs((G_pt - G_sp)[far]).max() < 5e-4


# -- G* bookkeeping -----------------------------------------------------------

def test_gstar_single_point_is_robin():
    pts = np.array([[0.4, 0.6]])
    assert lt.gstar(pts, 1, 1) == pytest.approx(ROBIN_CLOSED, abs=1e-12)


def test_gstar_symmetric_pair():
    pts = np.array([[0.2, 0.3], [0.7, 0.8]])
    assert lt.gstar(pts, 1, 2) == pytest.approx(lt.gstar(pts, 2, 1), abs=1e-13)
    s1 = sum(lt.gstar(pts, 1, l) for l in (1, 2))
    s2 = sum(lt.gstar(pts, 2, l) for l in (1, 2))
    assert s1 == pytest.approx(s2, abs=1e-12)


def test_gstar_coincident_distinct_indices():
    pts = np.array([[0.2, 0.3], [0.2, 0.3]])
    with pytest.raises(ConfigurationError):
        lt.gstar(pts, 1, 2)


def test_gstar_grad_single_point_zero():
    assert np.allclose(lt.gstar_grad(np.array([[0.1, 0.9]]), 1), 0.0)


def test_gstar_grad_half_period_zero():
    pts = np.array([[0.2, 0.3], [0.7, 0.8]])
    for t in (1, 2):
        assert np.abs(lt.gstar_grad(pts, t)).max() < 1e-12


def test_gstar_grad_matches_finite_difference():
    pts = np.array([[0.15, 0.45], [0.55, 0.75], [0.85, 0.2]])
    h = 1e-6
    for t in (1, 2, 3):
        g = lt.gstar_grad(pts, t)
        fd = np.zeros(2)
        for c in range(2):
            pp = pts.copy()
            pp[t - 1, c] += h
            up = sum(lt.gstar(pp, t, l) for l in range(1, 4))
            pp[t - 1, c] -= 2 * h
            dn = sum(lt.gstar(pp, t, l) for l in range(1, 4))
            fd[c] = (up - dn) / (2 * h)
        assert np.abs(g - fd).max() < 1e-7
