"""Coupling-matrix algebra: hypothesis checks, critical-surface functionals,
region classification, distinguished points and the degree count.

The parameter space of the system is carved by the level-N critical surface

    Lambda_I(rho) = 4 sum_i x_i - sum_ij a_ij x_i x_j = 0,   x_i = rho_i / (2 pi N),

restricted to the slab where Lambda_J > 0 for every nonempty proper subset J.
Everything in this module is exact linear algebra plus subset enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import InputError

MAX_SUBSET_N = 12  # 2^n subsets; systems of interest are small


def _as_matrix(a):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"coupling matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError("coupling matrix has non-finite entries")
    return m


def _support_connected(a):
    """BFS connectivity of the graph whose edges are the nonzero entries."""
    n = a.shape[0]
    if n == 1:
        return True
    adj = (a != 0.0)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(adj[i])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def check_hypotheses(a):
    """Check the structure conditions on the coupling matrix.

    h1: symmetric, entrywise nonnegative, irreducible and invertible.
    h2: inverse has nonpositive diagonal, nonnegative off-diagonal and
        nonnegative row sums.  (Vacuous for n = 1, where it reduces to a
        sign condition no positive coupling can satisfy; reported as-is.)

    Returns a dict {"h1": bool, "h2": bool, "reasons": [str, ...]}.
    """
    m = _as_matrix(a)
    n = m.shape[0]
    reasons = []

    sym = np.allclose(m, m.T, rtol=0.0, atol=1e-13 * max(1.0, np.abs(m).max()))
    if not sym:
        reasons.append("not symmetric")
    if np.any(m < 0.0):
        reasons.append("negative entries")
    if not _support_connected(m):
        reasons.append("reducible (support graph disconnected)")
    try:
        inv = np.linalg.inv(m)
        invertible = np.allclose(m @ inv, np.eye(n), atol=1e-10)
    except np.linalg.LinAlgError:
        inv = None
        invertible = False
    if not invertible:
        reasons.append("not invertible")

    h1 = sym and not np.any(m < 0.0) and _support_connected(m) and invertible

    h2 = False
    if inv is not None:
        diag_ok = np.all(np.diag(inv) <= 1e-13)
        off = inv - np.diag(np.diag(inv))
        off_ok = np.all(off >= -1e-13)
        rows_ok = np.all(inv.sum(axis=1) >= -1e-12)
        if not diag_ok:
            reasons.append("inverse has positive diagonal entry")
        if not off_ok:
            reasons.append("inverse has negative off-diagonal entry")
        if not rows_ok:
            reasons.append("inverse has negative row sum")
        h2 = bool(diag_ok and off_ok and rows_ok)
    else:
        reasons.append("h2 unverifiable without inverse")

    return {"h1": bool(h1), "h2": h2, "reasons": reasons}


@dataclass(frozen=True)
class InteractionMatrix:
    """Coupling matrix together with its inverse and hypothesis flags."""

    a: np.ndarray
    a_inv: np.ndarray
    n: int
    h1: bool
    h2: bool
    reasons: tuple = ()

    @classmethod
    def from_array(cls, a):
        m = _as_matrix(a)
        flags = check_hypotheses(m)
        try:
            inv = np.linalg.inv(m)
        except np.linalg.LinAlgError as exc:
            raise InputError("coupling matrix is singular") from exc
        resid = np.abs(m @ inv - np.eye(m.shape[0])).max()
        if resid > 1e-12 * max(1.0, np.abs(m).max()):
            raise InputError(f"inverse residual {resid:.2e} exceeds 1e-12")
        m.setflags(write=False)
        inv.setflags(write=False)
        return cls(a=m, a_inv=inv, n=m.shape[0], h1=flags["h1"], h2=flags["h2"],
                   reasons=tuple(flags["reasons"]))

    def require_h1(self):
        if not self.h1:
            raise InputError(f"matrix fails structure condition h1: {self.reasons}")

    def require_h2(self):
        # The inverse-sign condition is meaningful only for coupled systems.
        if self.n >= 2 and not self.h2:
            raise InputError(f"matrix fails interaction condition h2: {self.reasons}")


@dataclass(frozen=True)
class ParameterPoint:
    rho: np.ndarray
    level: int = 1

    def __post_init__(self):
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
            raise InputError("rho entries must be positive and finite")
        if self.level < 1:
            raise InputError("level N must be >= 1")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)


@dataclass
class RegionReport:
    lambda_I: float
    lambda_J: dict
    classification: str
    degree: Fraction
    normal: np.ndarray
    level: int
    tol: float = field(default=0.0)


def lambda_subset(A: InteractionMatrix, point: ParameterPoint, subset) -> float:
    """Quadratic surface functional restricted to an index subset.

    subset uses 1-based indices into {1..n}.  Returns
    4*sum_{i in J} x_i - sum_{i,j in J} a_ij x_i x_j with x = rho/(2 pi N).
    """
    idx = sorted(set(int(i) for i in subset))
    if not idx:
        raise InputError("subset must be nonempty")
    if idx[0] < 1 or idx[-1] > A.n:
        raise InputError(f"subset {idx} out of range 1..{A.n}")
    j = np.array(idx, dtype=int) - 1
    x = point.rho / (2.0 * math.pi * point.level)
    xj = x[j]
    return float(4.0 * xj.sum() - xj @ A.a[np.ix_(j, j)] @ xj)


def _all_proper_subsets(n):
    if n > MAX_SUBSET_N:
        raise InputError(f"subset enumeration capped at n <= {MAX_SUBSET_N}")
    full = range(1, n + 1)
    for size in range(1, n):
        yield from (tuple(c) for c in combinations(full, size))


def degree(N: int, chi) -> Fraction:
    """Topological degree of the solution map for parameters between surfaces.

    1 below the first surface; (1/N!) prod_{k=1..N} (-chi + k) for the band
    past the level-N surface.
    """
    if N < 0 or int(N) != N:
        raise InputError("N must be a nonnegative integer")
    if N == 0:
        return Fraction(1)
    chi = Fraction(chi)
    prod = Fraction(1)
    for k in range(1, N + 1):
        prod *= -chi + k
    return prod / math.factorial(N)


def normal_vector(A: InteractionMatrix, point: ParameterPoint) -> np.ndarray:
    """Outward normal direction (sum_j a_ij x_j - 2)_i with x = rho/(2 pi N)."""
    x = point.rho / (2.0 * math.pi * point.level)
    return A.a @ x - 2.0


def classify(A: InteractionMatrix, rho, N: int, tol: float | None = None,
             chi=0) -> RegionReport:
    """Locate rho relative to the level-N critical surface.

    classification is "on_Gamma_N" when |Lambda_I| <= tol and every proper
    subset functional is positive; "in_O_{N-1}" / "in_O_N" on the positive /
    negative side of Lambda_I under the same subset condition; "outside"
    when some Lambda_J <= 0.  tol defaults to 1e-9 relative to sum(rho).
    """
    A.require_h1()
    A.require_h2()
    point = ParameterPoint(rho=np.asarray(rho, dtype=float), level=N)
    if tol is None:
        tol = 1e-9 * float(point.rho.sum())
    if tol <= 0.0:
        raise InputError("tol must be positive")

    lam_I = lambda_subset(A, point, range(1, A.n + 1))
    lam_J = {js: lambda_subset(A, point, js) for js in _all_proper_subsets(A.n)}
    subset_ok = all(v > 0.0 for v in lam_J.values())

    if not subset_ok:
        cls = "outside"
    elif abs(lam_I) <= tol:
        cls = "on_Gamma_N"
    elif lam_I > 0.0:
        cls = f"in_O_{N - 1}"
    else:
        cls = f"in_O_{N}"

    if cls == "on_Gamma_N":
        deg = degree(N, chi)
    elif cls == f"in_O_{N - 1}":
        deg = degree(N - 1, chi)
    elif cls == f"in_O_{N}":
        deg = degree(N, chi)
    else:
        deg = Fraction(0)

    return RegionReport(lambda_I=lam_I, lambda_J=lam_J, classification=cls,
                        degree=deg, normal=normal_vector(A, point), level=N,
                        tol=tol)


def q_point(A: InteractionMatrix, N: int) -> ParameterPoint:
    """Distinguished surface point solving sum_j a_ij q_j = 8 pi N for all i."""
    if N < 1:
        raise InputError("level N must be >= 1")
    try:
        q = np.linalg.solve(A.a, np.full(A.n, 8.0 * math.pi * N))
    except np.linalg.LinAlgError as exc:
        raise InputError("coupling matrix is singular") from exc
    point = ParameterPoint(rho=q, level=N)
    resid = lambda_subset(A, point, range(1, A.n + 1))
    if abs(resid) > 1e-10 * max(1.0, float(np.abs(q).sum())):
        raise InputError(f"distinguished point residual {resid:.2e} too large")
    return point


def report_to_dict(report: RegionReport) -> dict:
    """JSON-ready view of a RegionReport."""
    return {
        "lambda_I": report.lambda_I,
        "lambda_J": {"+".join(map(str, k)): v for k, v in report.lambda_J.items()},
        "classification": report.classification,
        "degree": str(report.degree),
        "normal": list(map(float, report.normal)),
        "level": report.level,
        "tol": report.tol,
    }
