"""Leading-term coefficients of the critical-surface deviation.

Two regimes, split by the minimal mass m = min_i m_i of the configuration:

m < 4:  the regularized bracket

    B_it(delta0) = delta0^{2-m} - ((m-2)/2pi) int_{Omega_t \ B(p_t,delta0)}
                   (h_i(x)/h_i(p_t)) e^{2 pi m sum_l (G(x,p_l) - G*(p_t,p_l))} dV,

  whose delta0 -> 0 limit exists because the integrand is |x-p_t|^{-m} times
  a smooth factor.  The quadrature integrates the pure |x-p_t|^{-m} part of
  the inner annulus in closed form, which cancels the delta0^{2-m}
  counterterm analytically; only the smooth remainder is quadratured.  The
  total is  D = sum_{i in I1} e^{D_i - alpha_i} sum_t c_t B_it(0+), with the
  surface deviation predicted as  convention_factor * D * eps^{m-2} / N.

m = 4:  the local coefficients

    b_it = e^{D_i - alpha_i} ( Delta h_i(p_t)/(4 h_i(p_t)) - K(p_t) + 4 pi N
           + 4 pi (grad h_i/h_i)(p_t) . g_t + 16 pi^2 |g_t|^2 ),
    g_t  = sum_l grad_1 G*(p_t, p_l),

  with the deviation predicted as  -4 sum_{i,t} b_it eps^2 log(1/eps).

Cells Omega_t are the torus Voronoi cells of the points; the delta0 -> 0
limit only depends on the cell choice through the full t-sum, so reports
carry the cell descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .blowup_geometry import BlowupConfiguration, coefficient_report
from .errors import InputError, ResolutionError, WrongRegimeError
from .radial_solver import GlobalSolutionSummary
from .torus_green import default_evaluator, wrap

Q4_REL_TOL = 1e-6  # all m_i = 4 within this tolerance in the local regime


@dataclass
class PartitionCells:
    """Torus Voronoi cells of the configuration points, with excision data.

    r0[t] is half the distance from p_t to its cell boundary; the annulus
    [delta0, r0] around each point is handled by singularity subtraction and
    the rest of the cell by polar quadrature up to the cell radius R_t(theta).
    """

    points: np.ndarray
    n_theta: int = 256
    n_radial_panels: int = 24
    gauss_points: int = 10
    n_theta_panels: int = 64
    theta_gauss: int = 6
    outer_radial_panels: int = 3

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float)) % 1.0
        self.points = pts
        self.N = pts.shape[0]
        offs = [(i, j) for i in range(-2, 3) for j in range(-2, 3)]
        self._images = []
        for t in range(self.N):
            qs = []
            for s in range(self.N):
                for o in offs:
                    if s == t and o == (0, 0):
                        continue
                    qs.append(wrap(pts[s] - pts[t]) + np.array(o, dtype=float))
            self._images.append(np.asarray(qs))
        th_probe = np.linspace(0.0, 2 * np.pi, 1440, endpoint=False)
        self.r0 = np.array([0.5 * self.radius(t, th_probe).min()
                            for t in range(self.N)])
        self._outer_cache = {}

    def radius(self, t, theta):
        """Distance from p_t to the cell boundary along direction theta."""
        u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        qs = self._images[t]
        dot = u @ qs.T
        half = 0.5 * (qs ** 2).sum(1)
        with np.errstate(divide="ignore"):
            rr = np.where(dot > 1e-12, half[None, :] / dot, np.inf)
        return rr.min(axis=1)

    def contains(self, t, x):
        """Voronoi membership by nearest configuration point."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.stack([np.linalg.norm(wrap(x - p), axis=-1) for p in self.points])
        return d.argmin(axis=0) == t

    def annulus_nodes(self, t, delta0):
        """(xy, weight) for int_{delta0 <= |x-p_t| <= r0} . r^{1-m} dr dtheta
        style integrals; the weight carries dr dtheta only (no jacobian r)."""
        if not delta0 < self.r0[t]:
            raise InputError(f"delta0 {delta0:g} must be below r0 {self.r0[t]:g}")
        th = np.arange(self.n_theta) * (2.0 * np.pi / self.n_theta)
        wth = 2.0 * np.pi / self.n_theta
        gx, gw = leggauss(self.gauss_points)
        edges = np.geomspace(delta0, self.r0[t], self.n_radial_panels + 1)
        rs, wr = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            la, lb = np.log(a), np.log(b)
            ls = 0.5 * (la + lb) + 0.5 * (lb - la) * gx
            rr = np.exp(ls)
            rs.append(rr)
            wr.append(0.5 * (lb - la) * gw * rr)
        rs = np.concatenate(rs)
        wr = np.concatenate(wr)
        xy = (self.points[t][None, None, :]
              + rs[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None, :, :])
        wgt = (wr[:, None] * np.full((1, self.n_theta), wth))
        return rs, xy.reshape(-1, 2), wgt.reshape(-1)

    def outer_nodes(self, t):
        """(xy, weight) for int over Omega_t minus the r0-disk, jacobian r
        included in the weight."""
        if t in self._outer_cache:
            return self._outer_cache[t]
        gxt, gwt = leggauss(self.theta_gauss)
        gx, gw = leggauss(self.gauss_points)
        xs, ws = [], []
        for p in range(self.n_theta_panels):
            a = 2.0 * np.pi * p / self.n_theta_panels
            b = 2.0 * np.pi * (p + 1) / self.n_theta_panels
            ths = 0.5 * (a + b) + 0.5 * (b - a) * gxt
            wth = 0.5 * (b - a) * gwt
            Rth = self.radius(t, ths)
            for tj, wj, Rj in zip(ths, wth, Rth):
                redges = np.geomspace(self.r0[t], Rj, self.outer_radial_panels + 1)
                for ra, rb in zip(redges[:-1], redges[1:]):
                    rr = 0.5 * (ra + rb) + 0.5 * (rb - ra) * gx
                    wr = 0.5 * (rb - ra) * gw
                    xs.append(self.points[t][None, :]
                              + rr[:, None] * np.array([np.cos(tj), np.sin(tj)])[None, :])
                    ws.append(wj * wr * rr)
        xy = np.concatenate(xs)
        wgt = np.concatenate(ws)
        self._outer_cache[t] = (xy, wgt)
        return xy, wgt

    def areas(self):
        """Quadrature areas of the cells (disk + outer); sums to 1."""
        out = np.zeros(self.N)
        for t in range(self.N):
            _, w = self.outer_nodes(t)
            out[t] = w.sum() + np.pi * self.r0[t] ** 2
        return out

    def descriptor(self):
        return {"kind": "torus-voronoi", "points": self.points.tolist(),
                "r0": self.r0.tolist()}


@dataclass
class LeadingTermReport:
    minimal_indices: list
    m_min: float
    delta0_values: list
    bracket: np.ndarray            # (n, N, len(delta0_values))
    bracket_limit: np.ndarray      # (n, N) extrapolations
    cauchy_defect: float           # relative change between extrapolations
    c: np.ndarray
    D_total: float
    convention_factor: int
    cells: dict = field(default_factory=dict)

    def lambda_prediction(self, eps, N):
        return (self.convention_factor * self.D_total
                * eps ** (self.m_min - 2.0) / N)

    def to_dict(self):
        return {"minimal_indices": [i + 1 for i in self.minimal_indices],
                "m_min": self.m_min, "delta0_values": list(self.delta0_values),
                "bracket": self.bracket.tolist(),
                "bracket_limit": self.bracket_limit.tolist(),
                "cauchy_defect": self.cauchy_defect, "c": self.c.tolist(),
                "D_total": self.D_total,
                "convention_factor": self.convention_factor,
                "cells": self.cells}


def _check_regime_subcritical(config):
    m = config.m_min
    if m >= 4.0 - 1e-3:
        raise WrongRegimeError(
            f"minimal mass {m:g} is in the all-masses-4 regime; "
            "use b_coefficients")
    return m


def _smooth_factor(config, cells, t, xy, evaluator):
    """g(x) = e^{2 pi m [gamma(x,p_t) - gamma(p_t,p_t)
              + sum_{l != t} (G(x,p_l) - G(p_t,p_l))]}, h-free part."""
    ev = evaluator
    pts = config.points
    z = xy - pts[t]
    d = np.linalg.norm(wrap(z), axis=-1)
    val = ev.green_many(z) + np.log(d) / (2.0 * np.pi) - ev.robin_constant
    for l in range(config.N):
        if l == t:
            continue
        val += ev.green_many(xy - pts[l]) - ev.green(pts[t], pts[l])
    return val


def _outer_exponent(config, cells, t, xy, evaluator):
    """sum_l G(x, p_l) - sum_l G*(p_t, p_l) on outer nodes."""
    ev = evaluator
    total = np.zeros(len(xy))
    for l in range(config.N):
        total += ev.green_many(xy - config.points[l])
    return total - ev.gstar_sum(config.points, t + 1)


def regularized_bracket(i, t, config: BlowupConfiguration,
                        summaries: GlobalSolutionSummary = None, delta0=0.04,
                        cells: PartitionCells = None, evaluator=None):
    """B_it(delta0) for 1-based component i and point t.

    The pure |x-p_t|^{-m} annulus contribution is integrated in closed form
    (cancelling the delta0^{2-m} counterterm); the remaining integrand is
    smooth and handled by polar panel quadrature.
    """
    if not (1 <= i <= config.n and 1 <= t <= config.N):
        raise InputError(f"indices i={i}, t={t} out of range")
    if not (1e-3 <= delta0 <= 0.1):
        raise InputError(f"delta0 {delta0} outside [1e-3, 0.1]")
    m = _check_regime_subcritical(config)
    if summaries is not None:
        _check_masses_match(config, summaries)
    ev = evaluator or default_evaluator()
    cells = cells or PartitionCells(config.points)
    ii, tt = i - 1, t - 1
    w = config.weights[ii]
    href = float(w.value(config.points[tt]))

    rs, xy_a, w_a = cells.annulus_nodes(tt, delta0)
    expo = _smooth_factor(config, cells, tt, xy_a, ev)
    g = (w.value(xy_a) / href) * np.exp(2.0 * np.pi * m * expo)
    rr = np.repeat(rs, cells.n_theta)
    I_ann = float((w_a * (g - 1.0) * rr ** (1.0 - m)).sum())

    xy_o, w_o = cells.outer_nodes(tt)
    f = (w.value(xy_o) / href) * np.exp(
        2.0 * np.pi * m * _outer_exponent(config, cells, tt, xy_o, ev))
    I_out = float((w_o * f).sum())

    if not (np.isfinite(I_ann) and np.isfinite(I_out)):
        raise ResolutionError("bracket quadrature produced non-finite values")
    return cells.r0[tt] ** (2.0 - m) - (m - 2.0) / (2.0 * np.pi) * (I_ann + I_out)


def bracket_with_density(points, t, m, annulus_factor=None, outer_density=None,
                         delta0=0.04, cells: PartitionCells = None):
    """Bracket for a caller-supplied density (testing hook).

    annulus_factor: smooth factor g on the annulus (g(p_t) = 1); None means
    the pure |x-p_t|^{-m} density there.  outer_density: full density f on
    the cell beyond r0; None means zero.  The closed-form pure part always
    cancels the counterterm, so g == 1 with zero outer density returns
    r0^{2-m} exactly.
    """
    cells = cells or PartitionCells(points)
    tt = t - 1
    total = cells.r0[tt] ** (2.0 - m)
    acc = 0.0
    if annulus_factor is not None:
        rs, xy, wgt = cells.annulus_nodes(tt, delta0)
        g = annulus_factor(xy)
        rr = np.repeat(rs, cells.n_theta)
        acc += float((wgt * (g - 1.0) * rr ** (1.0 - m)).sum())
    if outer_density is not None:
        xy, wgt = cells.outer_nodes(tt)
        acc += float((wgt * outer_density(xy)).sum())
    return total - (m - 2.0) / (2.0 * np.pi) * acc


def bracket_extrapolate(values, delta0s, m):
    """Richardson step with the known delta0^{4-m} rate, pairwise."""
    values = np.asarray(values, dtype=float)
    d = np.asarray(delta0s, dtype=float)
    if len(values) < 2:
        return values[-1], np.nan
    extr = []
    for a in range(len(values) - 1):
        ratio = d[a + 1] / d[a]
        qq = ratio ** (4.0 - m)
        extr.append((values[a + 1] - qq * values[a]) / (1.0 - qq))
    extr = np.asarray(extr)
    if len(extr) >= 2 and extr[-1] != 0.0:
        defect = float(abs(extr[-1] - extr[-2]) / abs(extr[-1]))
    else:
        defect = np.nan
    return float(extr[-1]), defect


def _check_masses_match(config, summary, tol=1e-6):
    m = np.asarray(summary.m, dtype=float)
    if m.shape != config.masses.shape or np.max(np.abs(m - config.masses)) > \
            tol * max(1.0, np.max(np.abs(config.masses))):
        raise InputError(
            f"summary masses {m} inconsistent with configuration masses "
            f"{config.masses}")


def d_total(config: BlowupConfiguration, summary: GlobalSolutionSummary,
            cells: PartitionCells = None, delta0s=(0.08, 0.04, 0.02),
            convention_factor=2, evaluator=None) -> LeadingTermReport:
    """Assemble D = sum_{i in I1} e^{D_i - alpha_i} sum_t c_t B_it(0+).

    Brackets are evaluated on the delta0 ladder and Richardson-extrapolated
    at the known delta0^{4-m} rate; the report keeps both the finite-delta0
    values and the limits, plus the extrapolation Cauchy defect.  The
    predicted surface deviation for a supplied eps is
    lambda_prediction(eps, N) = convention_factor * D * eps^{m-2} / N.
    """
    m = _check_regime_subcritical(config)
    _check_masses_match(config, summary)
    if convention_factor not in (1, 2):
        raise InputError("convention_factor must be 1 or 2")
    ev = evaluator or default_evaluator()
    cells = cells or PartitionCells(config.points)
    i1 = config.minimal_index_set()
    rep = coefficient_report(config, ev)
    n, N = config.n, config.N
    bracket = np.full((n, N, len(delta0s)), np.nan)
    limit = np.full((n, N), np.nan)
    worst_defect = 0.0
    for i in i1:
        for t in range(N):
            vals = [regularized_bracket(i + 1, t + 1, config, summary,
                                        delta0=d0, cells=cells, evaluator=ev)
                    for d0 in delta0s]
            bracket[i, t, :] = vals
            limit[i, t], defect = bracket_extrapolate(vals, delta0s, m)
            if np.isfinite(defect):
                worst_defect = max(worst_defect, defect)
    amp = summary.amplitude()
    D = float(sum(amp[i] * float((rep.c * limit[i]).sum()) for i in i1))
    return LeadingTermReport(minimal_indices=i1, m_min=m,
                             delta0_values=list(delta0s), bracket=bracket,
                             bracket_limit=limit, cauchy_defect=worst_defect,
                             c=rep.c, D_total=D,
                             convention_factor=convention_factor,
                             cells=cells.descriptor())


def b_coefficients(config: BlowupConfiguration,
                   summary: GlobalSolutionSummary, evaluator=None):
    """Local coefficients b_it in the all-masses-4 regime, shape (n, N)."""
    if np.max(np.abs(config.masses - 4.0)) > Q4_REL_TOL * 4.0:
        raise WrongRegimeError(
            f"masses {config.masses} are not all 4 within {Q4_REL_TOL:g} rel;"
            " use the regularized bracket")
    _check_masses_match(config, summary)
    ev = evaluator or default_evaluator()
    amp = summary.amplitude()
    n, N = config.n, config.N
    b = np.zeros((n, N))
    for t in range(N):
        gg = ev.gstar_grad(config.points, t + 1)
        for i in range(n):
            w = config.weights[i]
            pt = config.points[t]
            hv = float(w.value(pt))
            b[i, t] = amp[i] * (
                0.25 * float(w.laplacian(pt)) / hv
                - config.curvature
                + 4.0 * np.pi * N
                + 4.0 * np.pi * float(w.grad(pt) @ gg) / hv
                + 16.0 * np.pi ** 2 * float(gg @ gg))
    return b


def lambda_prediction_q(b, eps):
    """-4 sum_{i,t} b_it eps^2 log(1/eps), the all-masses-4 deviation."""
    b = np.asarray(b, dtype=float)
    return float(-4.0 * b.sum() * eps ** 2 * np.log(1.0 / eps))
