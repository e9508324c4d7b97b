"""Spectral solver and parameter continuation for the mean-field system on
the flat unit torus.

The system for u = (u_1, ..., u_n) at parameter rho is

    F_i(u) = Delta u_i + sum_j a_ij rho_j (h_j e^{u_j} / int h_j e^{u_j} - 1) = 0

in the mean-zero gauge.  Fields live on an M x M grid but the state is the
set of rfft2 spectra truncated at the 2/3 dealiasing cutoff: that Galerkin
truncation keeps the residual evaluation free of the Laplacian-amplified
roundoff which otherwise floors the residual near 1e-10 at M = 512.  The
nonlinear term is evaluated pseudospectrally and filtered back to the band.

Newton steps solve the preconditioned system (I + Delta^{-1} J_nl) du =
-Delta^{-1} F by GMRES; a fold (singular Jacobian along a continuation
branch) surfaces as FoldSignal and the continuation driver switches from
natural parameter stepping to pseudo-arclength in (u, tau).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import (AmplitudeError, FoldSignal, InputError,
                     NonconvergenceError, SeparationError)
from .system_algebra import InteractionMatrix, ParameterPoint, lambda_subset
from .weights import WeightFunction

MAX_EXPONENT = 600.0  # e^u overflow guard


class TorusGrid:
    """Fourier workspace for one resolution M (power of two)."""

    def __init__(self, M):
        if M < 64 or (M & (M - 1)) != 0:
            raise InputError("resolution must be a power of two, at least 64")
        self.M = M
        k1 = np.fft.fftfreq(M, 1.0 / M)
        k2 = np.fft.rfftfreq(M, 1.0 / M)
        K1, K2 = np.meshgrid(k1, k2, indexing="ij")
        self.lap = -4.0 * np.pi ** 2 * (K1 ** 2 + K2 ** 2)
        with np.errstate(divide="ignore"):
            self.invlap = np.where(self.lap != 0.0, 1.0 / self.lap, 0.0)
        self.band = (np.abs(K1) <= M / 3.0) & (np.abs(K2) <= M / 3.0)
        self._parseval = np.full(self.lap.shape, 2.0)
        self._parseval[:, 0] = 1.0
        if M % 2 == 0:
            self._parseval[:, -1] = 1.0
        xs = np.arange(M) / M
        self.X1, self.X2 = np.meshgrid(xs, xs, indexing="ij")
        self.spacing = 1.0 / M

    def to_spec(self, u):
        return sfft.rfft2(u)

    def to_phys(self, uh):
        return sfft.irfft2(uh, s=(self.M, self.M))

    def truncate(self, uh):
        return uh * self.band

    def l2norm_spec(self, fh):
        return float(np.sqrt((self._parseval * (fh.real ** 2 + fh.imag ** 2)).sum())
                     / self.M ** 2)

    def grid_points(self):
        return np.stack([self.X1, self.X2], axis=-1)


@dataclass
class FieldState:
    """n fields as truncated spectra plus cached physical values.

    normalized is True when each component satisfies int h_i e^{u_i} = 1
    (the fields are then the shifted Theta_i rather than mean-zero u_i).
    """

    grid: TorusGrid
    spec: np.ndarray          # (n, M, M//2+1) complex, band-limited
    phys: np.ndarray = None   # (n, M, M) cache
    normalized: bool = False

    def __post_init__(self):
        if self.phys is None:
            self.refresh()

    @property
    def n(self):
        return self.spec.shape[0]

    def refresh(self):
        self.phys = np.stack([self.grid.to_phys(s) for s in self.spec])

    def copy(self):
        return FieldState(self.grid, self.spec.copy(), self.phys.copy(),
                          self.normalized)

    @classmethod
    def zeros(cls, grid, n):
        return cls(grid, np.zeros((n, grid.M, grid.M // 2 + 1), complex),
                   np.zeros((n, grid.M, grid.M)))

    def normalization_shifts(self, weights_grid):
        """log int h_i e^{u_i}; subtracting them enforces int h e^Theta = 1."""
        return np.array([math.log(float((wg * np.exp(ui)).mean()))
                         for wg, ui in zip(weights_grid, self.phys)])

    def theta(self, weights_grid):
        """Normalized fields Theta_i = u_i - log int h_i e^{u_i}."""
        return self.phys - self.normalization_shifts(weights_grid)[:, None, None]

    def normalize(self, weights):
        """Same solution in the int h_i e^{u_i} = 1 gauge."""
        wg = _weights_grid(weights, self.grid)
        shifts = self.normalization_shifts(wg)
        spec = self.spec.copy()
        spec[:, 0, 0] -= shifts * self.grid.M ** 2
        return FieldState(self.grid, spec, normalized=True)


def _weights_grid(weights, grid):
    out = []
    for w in weights:
        if isinstance(w, WeightFunction):
            out.append(w.sample(grid.M))
        else:
            arr = np.asarray(w, dtype=float)
            if arr.shape != (grid.M, grid.M):
                raise InputError("grid weight must match the resolution")
            out.append(arr)
    return out


def residual(state: FieldState, A: InteractionMatrix, rho, weights,
             dealias=True):
    """Residual spectra and norm; also returns the normalized densities w_j.

    Raises AmplitudeError if e^{u} overflows (continuation step too large).
    """
    grid = state.grid
    rho = np.asarray(rho, dtype=float)
    wg = _weights_grid(weights, grid)
    n = state.n
    if np.max(state.phys) > MAX_EXPONENT:
        raise AmplitudeError("field amplitude overflow in the exponential")
    dens = []
    for j in range(n):
        g = wg[j] * np.exp(state.phys[j])
        gh = grid.to_spec(g / g.mean())
        gh[0, 0] = grid.M ** 2  # exact unit mean
        if dealias:
            gh = grid.truncate(gh)
        dens.append(gh)
    dens = np.stack(dens)
    Fh = np.empty_like(state.spec)
    for i in range(n):
        acc = grid.lap * state.spec[i]
        for j in range(n):
            acc = acc + A.a[i, j] * rho[j] * dens[j]
        acc[0, 0] = 0.0
        Fh[i] = acc
    norm = float(np.sqrt(sum(grid.l2norm_spec(f) ** 2 for f in Fh)))
    wphys = np.stack([grid.to_phys(d) for d in dens])
    return Fh, norm, wphys


def _linear_operator(state, A, rho, wphys, dealias=True):
    """Preconditioned Jacobian v -> v + invlap * d(nonlinear)/du v."""
    grid = state.grid
    n = state.n
    M = grid.M

    def mv(flat):
        v = flat.reshape(n, M, M)
        out = np.empty_like(v)
        contrib = []
        for j in range(n):
            w = wphys[j]
            t = w * v[j] - w * float((w * v[j]).mean())
            th = grid.to_spec(t)
            th[0, 0] = 0.0
            if dealias:
                th = grid.truncate(th)
            contrib.append(th)
        for i in range(n):
            acc = np.zeros_like(contrib[0])
            for j in range(n):
                acc = acc + A.a[i, j] * rho[j] * contrib[j]
            out[i] = v[i] + grid.to_phys(grid.invlap * acc)
        return out.ravel()

    return LinearOperator((n * M * M, n * M * M), matvec=mv)


def newton_solve(state: FieldState, A: InteractionMatrix, rho, weights,
                 tol=1e-10, max_iter=25, gmres_tol=1e-8, dealias=True,
                 gmres_maxiter=250, stall_factor=None):
    """Damped Newton with spectrally preconditioned GMRES linear solves.

    Returns (state, residual_norm).  Raises FoldSignal when the linear
    solver stalls or the step fails to reduce the residual (near-singular
    Jacobian), NonconvergenceError when max_iter runs out.  stall_factor,
    when set, raises FoldSignal early unless the residual shrinks by that
    factor every three iterations (continuation trials want fast failure).
    """
    grid = state.grid
    rho = np.asarray(rho, dtype=float)
    n = state.n
    M = grid.M
    st = state.copy()
    trace = []
    for _ in range(max_iter):
        Fh, rn, wphys = residual(st, A, rho, weights, dealias)
        trace.append(rn)
        if rn < tol:
            return st, rn
        if (stall_factor is not None and len(trace) >= 4
                and trace[-1] > stall_factor * trace[-4]):
            raise FoldSignal(f"slow contraction at residual {rn:.3e}")
        op = _linear_operator(st, A, rho, wphys, dealias)
        rhs = np.stack([grid.to_phys(grid.invlap * f) for f in Fh])
        sol, info = gmres(op, -rhs.ravel(), rtol=gmres_tol, atol=0.0,
                          maxiter=gmres_maxiter, restart=100)
        if info != 0:
            raise FoldSignal(f"linear solve stalled (info={info}) at "
                             f"residual {rn:.3e}")
        duh = np.stack([grid.truncate(grid.to_spec(v))
                        for v in sol.reshape(n, M, M)])
        duh[:, 0, 0] = 0.0
        lam = 1.0
        improved = False
        for _ in range(40):
            cand = FieldState(grid, st.spec + lam * duh)
            try:
                _, rn2, _ = residual(cand, A, rho, weights, dealias)
            except AmplitudeError:
                lam *= 0.5
                continue
            if rn2 < rn:
                st = cand
                improved = True
                break
            lam *= 0.5
        if not improved:
            raise FoldSignal(f"no descent at residual {rn:.3e}")
    raise NonconvergenceError("Newton did not reach tolerance", trace)


def _arclength_solve(state, tau, A, weights, ray, tangent, pred,
                     tol=1e-10, max_iter=25, gmres_tol=1e-8, dealias=True,
                     stall_factor=None):
    """One pseudo-arclength corrector solve for unknowns (u, tau)."""
    grid = state.grid
    n = state.n
    M = grid.M
    tan_u, tan_tau = tangent
    pred_state, pred_tau = pred
    st = pred_state.copy()
    tau_c = pred_tau
    trace = []
    for _ in range(max_iter):
        rho = ray(tau_c)
        Fh, rn_f, wphys = residual(st, A, rho, weights, dealias)
        g_arc = (_arc_inner(grid, tan_u, st, pred_state)
                 + tan_tau * (tau_c - pred_tau))
        rn = float(np.hypot(rn_f, g_arc))
        trace.append(rn)
        if rn < tol:
            return st, tau_c, rn_f
        if (stall_factor is not None and len(trace) >= 4
                and trace[-1] > stall_factor * trace[-4]):
            raise FoldSignal(f"arclength corrector slow at {rn:.3e}")
        drho = ray.direction

        def mv(flat):
            v = flat[:-1].reshape(n, M, M)
            dt = flat[-1]
            out = np.empty_like(v)
            contrib = []
            for j in range(n):
                w = wphys[j]
                t = w * v[j] - w * float((w * v[j]).mean())
                th = grid.to_spec(t)
                th[0, 0] = 0.0
                if dealias:
                    th = grid.truncate(th)
                contrib.append(th)
            for i in range(n):
                acc = np.zeros_like(contrib[0])
                rho_term = np.zeros_like(contrib[0])
                for j in range(n):
                    acc = acc + A.a[i, j] * rho[j] * contrib[j]
                    # d rho_j / d tau times the density residual derivative
                    dj = grid.to_spec(wphys[j] - 1.0)
                    dj[0, 0] = 0.0
                    rho_term = rho_term + A.a[i, j] * drho[j] * dj
                out[i] = v[i] + grid.to_phys(grid.invlap * (acc + dt * rho_term))
            bot = _arc_inner_phys(grid, tan_u, v) + tan_tau * dt
            return np.concatenate([out.ravel(), [bot]])

        op = LinearOperator((n * M * M + 1, n * M * M + 1), matvec=mv)
        rhs_top = np.stack([grid.to_phys(grid.invlap * f) for f in Fh])
        rhs = np.concatenate([(-rhs_top).ravel(), [-g_arc]])
        sol, info = gmres(op, rhs, rtol=gmres_tol, atol=0.0, maxiter=400,
                          restart=100)
        if info != 0:
            raise FoldSignal(f"bordered linear solve stalled (info={info})")
        v = sol[:-1].reshape(n, M, M)
        duh = np.stack([grid.truncate(grid.to_spec(x)) for x in v])
        duh[:, 0, 0] = 0.0
        st = FieldState(grid, st.spec + duh)
        tau_c = tau_c + sol[-1]
    raise NonconvergenceError("arclength corrector stalled", [])


def _arc_inner(grid, tan_u, state, pred_state):
    d = state.phys - pred_state.phys
    return float(sum((tu * dd).mean() for tu, dd in zip(tan_u, d)))


def _arc_inner_phys(grid, tan_u, v):
    return float(sum((tu * vv).mean() for tu, vv in zip(tan_u, v)))


class Ray:
    """rho(tau) = start + tau * direction with positive direction."""

    def __init__(self, start, direction):
        self.start = np.atleast_1d(np.asarray(start, dtype=float))
        self.direction = np.atleast_1d(np.asarray(direction, dtype=float))
        if np.any(self.direction <= 0.0):
            raise InputError("ray direction must have all positive components")
        if self.start.shape != self.direction.shape:
            raise InputError("start and direction must have equal length")

    def __call__(self, tau):
        return self.start + tau * self.direction


@dataclass
class ContinuationRecord:
    rho: np.ndarray
    bubble_points: np.ndarray      # (N, 2)
    M_kt: np.ndarray               # (N,)
    eps_kt: np.ndarray             # (N,)
    local_masses: np.ndarray       # (n, N) rho_it / (2 pi)
    local_masses_unweighted: np.ndarray  # (n, N) int_B e^Theta / (2 pi)
    rho_background: np.ndarray     # (n,)
    lambda_measured: float
    residual_norm: float
    resolution: int
    step: int
    mode: str                      # "natural" | "arclength"

    @property
    def n_detected(self):
        return self.bubble_points.shape[0]

    @property
    def eps(self):
        return float(self.eps_kt.min()) if self.eps_kt.size else 1.0

    def row(self, n, max_bubbles):
        cells = [self.step, self.resolution, self.mode, self.lambda_measured,
                 self.residual_norm, self.n_detected]
        cells += list(self.rho)
        for arr, width in ((self.M_kt, max_bubbles), (self.eps_kt, max_bubbles)):
            vals = list(arr) + [np.nan] * (width - len(arr))
            cells += vals
        lm = np.full((n, max_bubbles), np.nan)
        lm[:, :self.local_masses.shape[1]] = self.local_masses
        cells += list(lm.ravel())
        cells += list(self.rho_background)
        return cells


@dataclass
class ContinuationControls:
    resolutions: tuple = (128, 256, 512)
    newton_tol: float = 1e-10
    step0: float = 0.5
    max_step: float = 1.0
    min_step: float = 1e-5
    stop_eps_cells: float = 8.0
    refine_eps_cells: float = 40.0
    delta0: float = 0.15
    prominence: float = 2.0
    target_level: int = 1
    max_records: int = 400
    surface_tol: float = 1e-9
    stop_at_surface: bool = True
    fold_halvings: int = 5
    dealias: bool = True


def detect_bubbles(state: FieldState, weights, delta0=0.15, prominence=2.0):
    """Grid local maxima of max_i Theta_i with the prominence threshold,
    greedily separated by at least 2 delta0."""
    grid = state.grid
    wg = _weights_grid(weights, grid)
    theta = state.theta(wg)
    phi = theta.max(axis=0)
    M = grid.M
    nb = [np.roll(np.roll(phi, di, 0), dj, 1)
          for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    is_max = np.all([phi >= x for x in nb], axis=0)
    background = np.median(phi)
    cand = np.argwhere(is_max & (phi >= background + prominence))
    order = np.argsort(-phi[tuple(cand.T)]) if len(cand) else []
    accepted = []
    for idx in order:
        p = cand[idx] / M
        if all(_torus_dist(p, q) > 2.0 * delta0 for q in accepted):
            accepted.append(p)
    return np.array(accepted).reshape(-1, 2), theta, phi


def _torus_dist(p, q):
    d = np.asarray(p) - np.asarray(q)
    d -= np.round(d)
    return float(np.linalg.norm(d))


def measure(state: FieldState, A: InteractionMatrix, rho, weights,
            delta0=0.15, prominence=2.0, target_level=1, residual_norm=None,
            resolution=None, step=0, mode="natural") -> ContinuationRecord:
    """Bubble heights, decay scales and local masses of a solved state.

    rho_it = int_{B(p_t, delta0)} rho_i h_i e^{Theta_i}; the background
    rho_ib collects the rest of the grid sum so sum_t rho_it + rho_ib =
    rho_i exactly.  The unweighted variant integrates e^{Theta_i} alone.
    """
    grid = state.grid
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if delta0 < 4.0 * grid.spacing:
        raise InputError("delta0 must cover at least 4 grid spacings")
    pts, theta, phi = detect_bubbles(state, weights, delta0, prominence)
    if len(pts) >= 2:
        dmin = min(_torus_dist(pts[a], pts[b])
                   for a in range(len(pts)) for b in range(a + 1, len(pts)))
        if dmin <= 2.0 * delta0:
            raise SeparationError(
                f"bubble disks overlap: separation {dmin:g} <= 2 delta0")
    wg = _weights_grid(weights, grid)
    n = state.n
    N = len(pts)
    M_kt = np.zeros(N)
    masks = []
    X = grid.grid_points()
    for t, p in enumerate(pts):
        d = X - p
        d -= np.round(d)
        mask = (d ** 2).sum(-1) <= delta0 ** 2
        masks.append(mask)
        M_kt[t] = max(theta[i][mask].max() for i in range(n))
    eps_kt = np.exp(-M_kt / 2.0)
    lm = np.zeros((n, N))
    lmu = np.zeros((n, N))
    bg = np.zeros(n)
    cell = 1.0 / grid.M ** 2
    for i in range(n):
        dens = rho[i] * wg[i] * np.exp(theta[i])
        covered = np.zeros_like(dens, dtype=bool)
        for t, mask in enumerate(masks):
            lm[i, t] = dens[mask].sum() * cell / (2.0 * np.pi)
            lmu[i, t] = np.exp(theta[i])[mask].sum() * cell / (2.0 * np.pi)
            covered |= mask
        bg[i] = dens[~covered].sum() * cell
    lam = _lambda_of(A, rho, target_level)
    return ContinuationRecord(
        rho=rho.copy(), bubble_points=pts, M_kt=M_kt, eps_kt=eps_kt,
        local_masses=lm, rho_background=bg,
        local_masses_unweighted=lmu, lambda_measured=lam,
        residual_norm=residual_norm if residual_norm is not None else np.nan,
        resolution=resolution or grid.M, step=step, mode=mode)


def _lambda_of(A, rho, level):
    point = ParameterPoint(rho=np.atleast_1d(rho), level=level)
    return lambda_subset(A, point, range(1, A.n + 1))


def refine_state(state: FieldState, M2) -> FieldState:
    """Zero-padded spectral interpolation to a finer grid."""
    grid2 = TorusGrid(M2)
    M = state.grid.M
    n = state.n
    spec2 = np.zeros((n, M2, M2 // 2 + 1), complex)
    scale = (M2 / M) ** 2
    for i in range(n):
        spec2[i, :M // 2, :M // 2 + 1] = state.spec[i, :M // 2, :] * scale
        spec2[i, M2 - M // 2:, :M // 2 + 1] = state.spec[i, M // 2:, :] * scale
    return FieldState(grid2, spec2)


@dataclass
class ContinuationResult:
    records: list
    status: str          # "surface", "resolution", "abort"
    state: FieldState
    rho: np.ndarray

    def eps_series(self):
        return np.array([r.eps for r in self.records])

    def lambda_series(self):
        return np.array([r.lambda_measured for r in self.records])


def continue_ray(A: InteractionMatrix, weights, rho_start, direction,
                 controls: ContinuationControls = None,
                 state0: FieldState = None) -> ContinuationResult:
    """Follow the solution branch along rho(tau) = rho_start + tau direction.

    Natural stepping in tau with adaptive step size; a FoldSignal switches
    the driver to pseudo-arclength so folds are rounded instead of fatal.
    The grid is refined through controls.resolutions as the bubble scale
    shrinks; the run stops on the critical surface (residual solution with
    no concentration trend) or when eps falls below stop_eps_cells grid
    spacings on the finest grid ("resolution" stop).  Solver failure after
    retries aborts with the partial record list.
    """
    ctl = controls or ContinuationControls()
    ray = Ray(rho_start, direction)
    ladder = list(ctl.resolutions)
    grid = TorusGrid(ladder.pop(0))
    n = A.n
    state = state0 or FieldState.zeros(grid, n)
    if state0 is not None and state0.grid.M != grid.M:
        raise InputError("state0 resolution must match the first ladder entry")
    tau = 0.0
    state, rn = newton_solve(state, A, ray(tau), weights, tol=ctl.newton_tol,
                             dealias=ctl.dealias)
    records = []
    step_no = 0
    dtau = ctl.step0
    mode = "natural"
    prev = (state.copy(), tau)
    tan = None
    ds = None
    # tau value at which the ray meets the target surface, for surface stop
    tau_surf = _surface_tau(A, ray, ctl.target_level) if ctl.stop_at_surface \
        else np.inf
    status = None

    def record(st, tu, rnorm):
        nonlocal step_no
        rec = measure(st, A, ray(tu), weights, delta0=ctl.delta0,
                      prominence=ctl.prominence, target_level=ctl.target_level,
                      residual_norm=rnorm, resolution=st.grid.M, step=step_no,
                      mode=mode)
        records.append(rec)
        step_no += 1
        return rec

    rec = record(state, tau, rn)
    while len(records) < ctl.max_records:
        eps = records[-1].eps if records[-1].n_detected else 1.0
        concentrated = records[-1].n_detected > 0
        # resolution ladder
        if concentrated and eps * state.grid.M < ctl.refine_eps_cells and ladder:
            M2 = ladder.pop(0)
            state2 = refine_state(state, M2)
            prev2 = refine_state(prev[0], M2)
            try:
                state2, rn = newton_solve(state2, A, ray(tau), weights,
                                          tol=ctl.newton_tol, dealias=ctl.dealias)
            except FoldSignal:
                if mode == "natural":
                    mode = "arclength"
                tan2, _ = _tangent_from(prev2, (state2, tau))
                state2, tau, rn = _arclength_solve(
                    state2, tau, A, weights, ray, (tan2[0], tan2[1]),
                    (state2, tau), tol=ctl.newton_tol, dealias=ctl.dealias)
            state = state2
            prev = (prev2, prev[1])
            if mode == "arclength" and tan is not None:
                tan, ds = _tangent_from(prev, (state, tau))
            continue
        if concentrated and eps * state.grid.M <= ctl.stop_eps_cells and not ladder:
            status = "resolution"
            break
        if (mode == "natural" and not concentrated and tau >= tau_surf
                and abs(_lambda_of(A, ray(tau), ctl.target_level)) <= max(
                    ctl.surface_tol, 1e-12)):
            status = "surface"
            break

        if mode == "natural":
            stepped = False
            dtau_floor = max(ctl.min_step, dtau / 2 ** ctl.fold_halvings)
            while dtau >= dtau_floor:
                target = min(tau + dtau, tau_surf) if tau + dtau > tau_surf \
                    and not concentrated else tau + dtau
                try:
                    nstate, rn = newton_solve(state, A, ray(target), weights,
                                              tol=ctl.newton_tol,
                                              dealias=ctl.dealias,
                                              max_iter=14, stall_factor=0.25)
                except (FoldSignal, NonconvergenceError, AmplitudeError):
                    dtau *= 0.5
                    continue
                prev = (state.copy(), tau)
                state, tau = nstate, target
                stepped = True
                break
            if not stepped:
                mode = "arclength"
                tan, ds = _tangent_from(prev, (state, tau))
                continue
            rec = record(state, tau, rn)
            dtau = min(dtau * 1.4, ctl.max_step)
        else:
            if tan is None:
                tan, ds = _tangent_from(prev, (state, tau))
            done = False
            while ds >= 1e-10:
                pred_state = FieldState(state.grid,
                                        state.spec + ds * tan[2])
                pred_tau = tau + ds * tan[1]
                try:
                    nstate, ntau, rn = _arclength_solve(
                        state, tau, A, weights, ray, (tan[0], tan[1]),
                        (pred_state, pred_tau), tol=ctl.newton_tol,
                        dealias=ctl.dealias, max_iter=14, stall_factor=0.25)
                except (FoldSignal, NonconvergenceError, AmplitudeError):
                    ds *= 0.5
                    continue
                prev = (state.copy(), tau)
                tan, _ = _tangent_from(prev, (nstate, ntau))
                state, tau = nstate, ntau
                done = True
                break
            if not done:
                status = "abort"
                break
            rec = record(state, tau, rn)
            ds = min(ds * 1.3, ctl.max_step)
    if status is None:
        status = "resolution" if records and records[-1].n_detected else "abort"
    return ContinuationResult(records=records, status=status, state=state,
                              rho=ray(tau))


def _tangent_from(prev, cur):
    """Normalized branch tangent ((phys fields), dtau, (spec fields))."""
    (ps, ptau), (cs, ctau) = prev, cur
    du = cs.phys - ps.phys
    duh = cs.spec - ps.spec
    dtau = ctau - ptau
    sc = math.sqrt(float((du ** 2).mean(axis=(1, 2)).sum()) + dtau ** 2)
    if sc == 0.0:
        sc = 1.0
    return (du / sc, dtau / sc, duh / sc), max(sc, 1e-3)


def _surface_tau(A, ray, level):
    """tau where Lambda_I(rho(tau)) = 0 along the ray (inf if never)."""
    lo, hi = 0.0, None
    f0 = _lambda_of(A, ray(0.0), level)
    t = 1.0
    for _ in range(60):
        if _lambda_of(A, ray(t), level) * f0 < 0:
            hi = t
            break
        t *= 1.5
    if hi is None:
        return np.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _lambda_of(A, ray(mid), level) * f0 < 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12 * (1 + hi):
            break
    return 0.5 * (lo + hi)
