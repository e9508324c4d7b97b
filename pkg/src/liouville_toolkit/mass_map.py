"""The finite-dimensional height-to-mass map and its inversion.

With the gauge alpha_1 = 0, the map (alpha_2, ..., alpha_n) -> (sigma_2,
..., sigma_n) across radial global solutions is smooth and (numerically)
invertible; its Jacobian is the matrix checked by jacobian() below.  Targets
for invert() must sit on the Pohozaev surface sum_i sigma_i (m_i - 4) = 0
with m = A sigma, since every global solution does.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NonconvergenceError, PohozaevSurfaceError
from .radial_solver import integrate, summarize
from .system_algebra import InteractionMatrix


def worker_count(tasks=None):
    """Worker cap from TOOLKIT_THREADS (default: number of CPUs)."""
    env = os.environ.get("TOOLKIT_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    cap = max(1, cap)
    if tasks is not None:
        cap = min(cap, tasks)
    return cap


@dataclass
class MassMapSample:
    alpha_hat: np.ndarray
    sigma: np.ndarray
    jacobian: np.ndarray
    det: float
    cond: float


def sigma_of_alpha(A: InteractionMatrix, alpha_hat, r_max=1e5, tol=1e-10):
    """sigma of the global solution with heights (0, alpha_hat).

    Only the alpha_1 = 0 gauge is imposed here; the remaining heights may
    take any real value (Newton iterates pass through slightly negative
    ones), unlike the min-zero normalization of HeightVector.
    """
    alpha = np.concatenate([[0.0], np.atleast_1d(np.asarray(alpha_hat,
                                                            dtype=float))])
    profile = integrate(A, alpha, r_max=r_max, tol=tol)
    return summarize(A, profile).sigma


def jacobian(A: InteractionMatrix, alpha_hat, h_step=1e-3, r_max=1e5,
             tol=1e-10):
    """Jacobian d sigma_{2..n} / d alpha_{2..n} by Richardson-refined
    central differences; returns a MassMapSample (det reported, never raised:
    singularity is something this toolkit verifies, not assumes)."""
    if not (1e-5 <= h_step <= 1e-2):
        raise InputError(f"h_step {h_step} outside [1e-5, 1e-2]")
    ah = np.atleast_1d(np.asarray(alpha_hat, dtype=float))
    k = len(ah)
    sigma0 = sigma_of_alpha(A, ah, r_max=r_max, tol=tol)

    def column(args):
        j, hh = args
        e = np.zeros(k)
        e[j] = hh
        sp = sigma_of_alpha(A, ah + e, r_max=r_max, tol=tol)
        sm = sigma_of_alpha(A, ah - e, r_max=r_max, tol=tol)
        return (sp[1:] - sm[1:]) / (2.0 * hh)

    tasks = [(j, h_step) for j in range(k)] + [(j, h_step / 2.0) for j in range(k)]
    with ThreadPoolExecutor(max_workers=worker_count(len(tasks))) as ex:
        cols = list(ex.map(column, tasks))
    J = np.zeros((k, k))
    for j in range(k):
        J[:, j] = (4.0 * cols[k + j] - cols[j]) / 3.0
    det = float(np.linalg.det(J))
    cond = float(np.linalg.cond(J)) if k else 1.0
    return MassMapSample(alpha_hat=ah, sigma=sigma0, jacobian=J, det=det,
                         cond=cond)


def pohozaev_defect(A: InteractionMatrix, sigma):
    sigma = np.asarray(sigma, dtype=float)
    m = A.a @ sigma
    return float(abs((sigma * (m - 4.0)).sum()) / sigma.sum())


def invert(A: InteractionMatrix, sigma_target, alpha0=None, tol=1e-8,
           max_iter=40, r_max=1e5, ode_tol=1e-10):
    """Recover alpha_hat with sigma(alpha_hat) = sigma_target by damped Newton.

    The target must satisfy the Pohozaev constraint to 1e-6 (relative); the
    residual is matched on components 2..n and the full vector is verified
    afterwards.  Raises NonconvergenceError with the residual trace on stall.
    """
    st = np.atleast_1d(np.asarray(sigma_target, dtype=float))
    defect = pohozaev_defect(A, st)
    if defect > 1e-6:
        raise PohozaevSurfaceError(
            f"target mass vector violates the Pohozaev constraint by "
            f"{defect:.3e} (limit 1e-6)", defect)
    k = len(st) - 1
    if k == 0:
        return np.zeros(0)
    ah = np.zeros(k) if alpha0 is None else np.array(alpha0, dtype=float)
    trace = []
    scale = np.linalg.norm(st)
    polished = False
    for _ in range(max_iter):
        sig = sigma_of_alpha(A, ah, r_max=r_max, tol=ode_tol)
        res = sig[1:] - st[1:]
        rn = np.linalg.norm(res)
        trace.append(rn)
        if rn <= tol * scale and np.linalg.norm(sig - st) <= 10 * tol * scale:
            if polished:
                return ah
            # one undamped polish step: quadratic convergence takes the
            # height error well below the sigma tolerance
            J = _plain_jacobian(A, ah, r_max=r_max, tol=ode_tol)
            try:
                ah = ah + np.linalg.solve(J, -res)
            except np.linalg.LinAlgError:
                return ah
            polished = True
            continue
        polished = False
        J = _plain_jacobian(A, ah, r_max=r_max, tol=ode_tol)
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError as exc:
            raise NonconvergenceError("singular mass-map Jacobian", trace) from exc
        lam = 1.0
        for _ in range(30):
            try:
                r2 = np.linalg.norm(
                    sigma_of_alpha(A, ah + lam * step, r_max=r_max,
                                   tol=ode_tol)[1:] - st[1:])
            except Exception:
                r2 = np.inf
            if r2 < rn:
                break
            lam *= 0.5
        else:
            raise NonconvergenceError("Newton damping exhausted", trace)
        ah = ah + lam * step
    raise NonconvergenceError(f"no convergence in {max_iter} iterations", trace)


def _plain_jacobian(A, alpha_hat, h=1e-4, r_max=1e5, tol=1e-10):
    ah = np.atleast_1d(np.asarray(alpha_hat, dtype=float))
    k = len(ah)
    J = np.zeros((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        sp = sigma_of_alpha(A, ah + e, r_max=r_max, tol=tol)
        sm = sigma_of_alpha(A, ah - e, r_max=r_max, tol=tol)
        J[:, j] = (sp[1:] - sm[1:]) / (2.0 * h)
    return J


def det_grid(A: InteractionMatrix, grids, r_max=1e5, tol=1e-10):
    """jacobian() over a cartesian product of alpha_hat axes; returns samples."""
    axes = [np.atleast_1d(np.asarray(g, dtype=float)) for g in grids]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    return [jacobian(A, p, r_max=r_max, tol=tol) for p in pts]
