"""Candidate blowup configurations on the torus: location equations,
critical-configuration solving, and the interaction-height / bubble-weight
coefficients.

For a configuration of N points p_t with masses m_i and weights h_i, the
location residual at p_t is

    R_t = sum_i [ grad log h_i(p_t) + 2 pi m_i sum_l grad_1 G*(p_t, p_l) ],

which is the gradient in p_t of  E = sum_i sum_t [ log h_i(p_t)
+ pi m_i sum_l G*(p_t, p_l) ].  Critical configurations solve R_t = 0.

The interaction heights and bubble weight ratios are

    H_{i,t} = log h_i(p_t) + 2 pi m_i sum_l G*(p_t, p_l),
    c_t     = [h_i(p_t) e^{2 pi m sum_l G*(p_t,p_l)}]
            / [h_i(p_1) e^{2 pi m sum_l G*(p_1,p_l)}],   m = min_i m_i,

with c_t the same for every index i whose mass attains the minimum; the
spread across those indices is reported as a compatibility defect.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigurationError, DegenerateConfigurationError,
                     InputError, MergeError, NonconvergenceError)
from .torus_green import GreenEvaluator, default_evaluator, torus_distance
from .weights import WeightFunction, constant_weight

MIN_SEPARATION = 1e-3
I1_REL_TOL = 1e-6


class CompatibilityWarning(UserWarning):
    """Bubble-weight ratios disagree across minimal-mass indices."""


@dataclass
class BlowupConfiguration:
    points: np.ndarray            # (N, 2) torus points
    masses: np.ndarray            # (n,) m_i, all > 2
    weights: tuple                # n WeightFunctions
    curvature: float = 0.0        # flat torus

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float)) % 1.0
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ConfigurationError("points must be an (N, 2) array")
        for t in range(len(pts)):
            for s in range(t + 1, len(pts)):
                if torus_distance(pts[t], pts[s]) < MIN_SEPARATION:
                    raise ConfigurationError(
                        f"points {t + 1} and {s + 1} closer than {MIN_SEPARATION}")
        m = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if np.any(m <= 2.0):
            raise ConfigurationError("all masses must exceed 2")
        w = tuple(self.weights)
        if len(w) != len(m):
            raise ConfigurationError("one weight per component required")
        self.points = pts
        self.masses = m
        self.weights = w

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def n(self):
        return len(self.masses)

    @property
    def m_min(self):
        return float(self.masses.min())

    def minimal_index_set(self):
        """Indices (0-based) whose mass attains the minimum within 1e-6 rel."""
        m = self.m_min
        return [i for i in range(self.n)
                if abs(self.masses[i] - m) < I1_REL_TOL * m]

    def to_dict(self):
        return {"points": self.points.tolist(), "masses": self.masses.tolist(),
                "weights": [w.to_dict() for w in self.weights],
                "curvature": self.curvature}

    @classmethod
    def from_dict(cls, d):
        return cls(points=np.asarray(d["points"], dtype=float),
                   masses=np.asarray(d["masses"], dtype=float),
                   weights=tuple(WeightFunction.from_dict(w) for w in d["weights"]),
                   curvature=d.get("curvature", 0.0))


@dataclass
class CoefficientReport:
    H: np.ndarray                 # (n, N) interaction heights
    c: np.ndarray                 # (N,) bubble weight ratios, c[0] = 1
    residuals: np.ndarray         # (N, 2) location residuals
    h_defect: np.ndarray          # (n,) max_{t,s} |H_{i,t} - H_{i,s}|
    c_spread: float               # relative spread of c across minimal indices
    minimal_indices: list = field(default_factory=list)

    def to_dict(self):
        return {"H": self.H.tolist(), "c": self.c.tolist(),
                "residuals": self.residuals.tolist(),
                "h_defect": self.h_defect.tolist(), "c_spread": self.c_spread,
                "minimal_indices": [i + 1 for i in self.minimal_indices]}


def location_residual(config: BlowupConfiguration, evaluator=None,
                      component_weights=None):
    """R_t for every t, shape (N, 2).

    component_weights, when given, multiplies the i-th summand (the local
    masses rho_it in the weighted variant of the location equations); the
    default is the plain unweighted, mass-scaled form.
    """
    ev = evaluator or default_evaluator()
    pts = config.points
    cw = (np.ones(config.n) if component_weights is None
          else np.asarray(component_weights, dtype=float))
    if cw.shape != (config.n,):
        raise InputError("component_weights must have one entry per component")
    out = np.zeros((config.N, 2))
    for t in range(config.N):
        gg = ev.gstar_grad(pts, t + 1)
        for i in range(config.n):
            out[t] += cw[i] * (config.weights[i].grad_log(pts[t])
                               + 2.0 * np.pi * config.masses[i] * gg)
    return out


def interaction_energy(config: BlowupConfiguration, evaluator=None):
    """sum_i sum_t [log h_i(p_t) + pi m_i sum_l G*(p_t, p_l)]; its gradient in
    p_t is location_residual."""
    ev = evaluator or default_evaluator()
    pts = config.points
    total = 0.0
    for t in range(config.N):
        gs = ev.gstar_sum(pts, t + 1)
        for i in range(config.n):
            total += float(config.weights[i].log_value(pts[t])
                           + np.pi * config.masses[i] * gs)
    return total


def solve_locations(weights, masses, N, init, gauge=None, evaluator=None,
                    tol=1e-9, max_iter=60, fd_step=1e-6):
    """Damped Newton for a critical configuration of N points.

    gauge: "fix-first" pins p_1 (needed when every weight is constant and
    the residual is translation invariant), "free" moves all 2N coordinates;
    default picks "fix-first" exactly in the constant-weight case.  Raises
    MergeError if points collide along the way, and
    DegenerateConfigurationError if the (gauged) Jacobian is singular.
    """
    ev = evaluator or default_evaluator()
    masses = np.atleast_1d(np.asarray(masses, dtype=float))
    weights = tuple(weights)
    pts = np.atleast_2d(np.asarray(init, dtype=float)) % 1.0
    if pts.shape != (N, 2):
        raise InputError(f"init must be ({N}, 2)")
    if gauge is None:
        all_const = all(not w.poly.terms for w in weights)
        gauge = "fix-first" if all_const else "free"
    if gauge not in ("fix-first", "free"):
        raise InputError(f"unknown gauge {gauge!r}")
    free = np.ones((N, 2), dtype=bool)
    if gauge == "fix-first":
        free[0] = False

    def make_config(p):
        return BlowupConfiguration(points=p, masses=masses, weights=weights)

    def resid_vec(p):
        try:
            cfg = make_config(p)
        except ConfigurationError as exc:
            raise MergeError(str(exc)) from exc
        return location_residual(cfg, ev)

    R = resid_vec(pts)
    for iteration in range(max_iter):
        rmax = np.abs(R).max() if R.size else 0.0
        if np.sqrt((R ** 2).sum(1)).max() < tol:
            return make_config(pts), iteration
        idx = np.argwhere(free)
        k = len(idx)
        J = np.zeros((2 * N, k))
        for col, (tt, cc) in enumerate(idx):
            dp = pts.copy()
            dp[tt, cc] += fd_step
            Rp = resid_vec(dp)
            dp[tt, cc] -= 2 * fd_step
            Rm = resid_vec(dp)
            J[:, col] = ((Rp - Rm) / (2 * fd_step)).ravel()
        rows = np.argwhere(free).tolist()
        Jg = J[[2 * t + c for t, c in rows], :]
        cond = np.linalg.cond(Jg)
        if not np.isfinite(cond) or cond > 1e8:
            raise DegenerateConfigurationError(
                f"location Jacobian condition {cond:.2e} beyond the gauge")
        try:
            step = np.linalg.solve(Jg, -R[free])
        except np.linalg.LinAlgError as exc:
            raise DegenerateConfigurationError(
                "location Jacobian singular beyond the gauge") from exc
        lam = 1.0
        base = np.linalg.norm(R[free])
        for _ in range(30):
            trial = pts.copy()
            trial[free] = pts[free] + lam * step
            trial %= 1.0
            try:
                Rt = resid_vec(trial)
            except MergeError:
                lam *= 0.5
                continue
            if np.linalg.norm(Rt[free]) < base or base == 0.0:
                pts, R = trial, Rt
                break
            lam *= 0.5
        else:
            raise NonconvergenceError("location Newton stalled", [base])
    raise NonconvergenceError(f"no convergence in {max_iter} iterations",
                              [float(np.abs(R).max())])


def coefficient_report(config: BlowupConfiguration, evaluator=None,
                       consistency_tol=1e-6) -> CoefficientReport:
    """Interaction heights H_{i,t}, weight ratios c_t and location residuals.

    c_t is computed for every minimal-mass index and cross-checked; a spread
    beyond consistency_tol (relative) emits CompatibilityWarning, since such
    a configuration cannot arise from a common bubbling family.
    """
    ev = evaluator or default_evaluator()
    pts = config.points
    n, N = config.n, config.N
    gs = np.array([ev.gstar_sum(pts, t + 1) for t in range(N)])
    H = np.zeros((n, N))
    for i in range(n):
        for t in range(N):
            H[i, t] = float(config.weights[i].log_value(pts[t])
                            + 2.0 * np.pi * config.masses[i] * gs[t])
    m = config.m_min
    i1 = config.minimal_index_set()
    c_by_i = np.zeros((len(i1), N))
    for row, i in enumerate(i1):
        w = config.weights[i]
        num = np.array([float(w.value(pts[t])) * np.exp(2.0 * np.pi * m * gs[t])
                        for t in range(N)])
        c_by_i[row] = num / num[0]
    c = c_by_i.mean(axis=0)
    spread = 0.0
    if len(i1) > 1 and N > 1:
        spread = float(np.max(np.abs(c_by_i - c[None, :])) / np.max(np.abs(c)))
        if spread > consistency_tol:
            warnings.warn(
                f"bubble weight ratios differ by {spread:.3e} across "
                f"minimal-mass components; configuration is not compatible "
                f"with a common bubbling family", CompatibilityWarning)
    h_defect = np.array([np.abs(H[i][:, None] - H[i][None, :]).max()
                         for i in range(n)])
    return CoefficientReport(H=H, c=c, residuals=location_residual(config, ev),
                             h_defect=h_defect, c_spread=spread,
                             minimal_indices=i1)


def half_period_pair(base=(0.25, 0.25)):
    """The two-point configuration p, p + (1/2, 1/2)."""
    b = np.asarray(base, dtype=float)
    return np.stack([b, (b + 0.5) % 1.0])


def uniform_configuration(masses, N, points=None):
    """Constant-weight configuration, default points on the half-period pair
    (N = 2) or a shifted lattice (general N)."""
    masses = np.atleast_1d(np.asarray(masses, dtype=float))
    n = len(masses)
    if points is None:
        if N == 1:
            points = np.array([[0.5, 0.5]])
        elif N == 2:
            points = half_period_pair()
        else:
            k = int(np.ceil(np.sqrt(N)))
            xs = (np.arange(k) + 0.31) / k
            pts = np.stack(np.meshgrid(xs, xs, indexing="ij"), -1).reshape(-1, 2)
            points = pts[:N]
    return BlowupConfiguration(points=points, masses=masses,
                               weights=tuple(constant_weight() for _ in range(n)))
