"""Positive weight functions on the torus with exact derivatives.

Weights are trigonometric polynomials

    P(x) = base + sum_c [ a_c cos(2 pi c.x) + b_c sin(2 pi c.x) ],  c in Z^2,

used either directly (h = P, positivity checked on a 256^2 grid) or through
the exponential (h = exp(P), positive by construction).  Values, gradients,
Laplacians, log h and grad log h are all evaluated in closed form, so the
location equations and coefficient formulas carry no quadrature error from h.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError


class TrigPolynomial:
    """sum of base + cos/sin modes; terms is a list of (kvec, cos_amp, sin_amp)."""

    def __init__(self, base=0.0, terms=()):
        self.base = float(base)
        tt = []
        for k, ca, sa in terms:
            k = np.asarray(k, dtype=float)
            if k.shape != (2,):
                raise InputError("mode index must be a 2-vector")
            tt.append((k, float(ca), float(sa)))
        self.terms = tuple(tt)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], self.base)
        for k, ca, sa in self.terms:
            ph = 2 * np.pi * (x @ k)
            out = out + ca * np.cos(ph) + sa * np.sin(ph)
        return out

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k, ca, sa in self.terms:
            ph = 2 * np.pi * (x @ k)
            amp = -ca * np.sin(ph) + sa * np.cos(ph)
            out = out + 2 * np.pi * amp[..., None] * k
        return out

    def laplacian(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for k, ca, sa in self.terms:
            ph = 2 * np.pi * (x @ k)
            out = out - 4 * np.pi ** 2 * (k @ k) * (ca * np.cos(ph) + sa * np.sin(ph))
        return out

    def to_dict(self):
        return {"base": self.base,
                "terms": [{"k": list(map(int, k)), "cos": ca, "sin": sa}
                          for k, ca, sa in self.terms]}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("base", 0.0),
                   [(t["k"], t.get("cos", 0.0), t.get("sin", 0.0))
                    for t in d.get("terms", [])])


class WeightFunction:
    """Positive weight h on the torus; kind "trig" (h = P) or "exp" (h = e^P).

    bound: the declared constant C with 1/C <= h <= C, verified on a 256^2
    grid at construction.  strict=False admits weights that merely stay
    nonnegative (tolerated by the mean-field solver, where h enters only as
    h e^u, but not by the location machinery, which divides by h(p_t)).
    """

    CHECK_GRID = 256

    def __init__(self, poly: TrigPolynomial, kind="trig", bound=None,
                 strict=True):
        if kind not in ("trig", "exp"):
            raise InputError(f"unknown weight kind {kind!r}")
        self.kind = kind
        self.poly = poly
        self.strict = bool(strict)
        xs = np.arange(self.CHECK_GRID) / self.CHECK_GRID
        X = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1)
        vals = self.value(X)
        vmin, vmax = float(vals.min()), float(vals.max())
        if vmin < 0.0 or (self.strict and vmin == 0.0):
            raise InputError(f"weight not positive on the check grid (min {vmin:.3g})")
        if self.strict:
            self.bound = float(bound) if bound is not None else max(vmax, 1.0 / vmin)
            if vmin < 1.0 / self.bound - 1e-12 or vmax > self.bound + 1e-12:
                raise InputError(
                    f"weight leaves [1/C, C] for C={self.bound:g}: "
                    f"range [{vmin:g}, {vmax:g}]")
        else:
            self.bound = float(bound) if bound is not None else max(vmax, 1.0)

    # --- closed-form evaluations (all accept (..., 2) arrays) ---

    def value(self, x):
        p = self.poly.value(x)
        return np.exp(p) if self.kind == "exp" else p

    def log_value(self, x):
        if self.kind == "exp":
            return self.poly.value(x)
        return np.log(self.poly.value(x))

    def grad(self, x):
        if self.kind == "exp":
            return self.poly.grad(x) * self.value(x)[..., None]
        return self.poly.grad(x)

    def grad_log(self, x):
        if self.kind == "exp":
            return self.poly.grad(x)
        return self.poly.grad(x) / self.poly.value(x)[..., None]

    def laplacian(self, x):
        if self.kind == "exp":
            g = self.poly.grad(x)
            return (self.poly.laplacian(x) + (g * g).sum(-1)) * self.value(x)
        return self.poly.laplacian(x)

    def scaled(self, c):
        """c * h, same kind (c > 0)."""
        if c <= 0:
            raise InputError("scale factor must be positive")
        if self.kind == "exp":
            p = TrigPolynomial(self.poly.base + np.log(c), self.poly.terms)
            return WeightFunction(p, "exp")
        p = TrigPolynomial(c * self.poly.base,
                           [(k, c * ca, c * sa) for k, ca, sa in self.poly.terms])
        return WeightFunction(p, "trig")

    def sample(self, M):
        """Values on the M x M lattice (i/M, j/M)."""
        xs = np.arange(M) / M
        X = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1)
        return self.value(X)

    def to_dict(self):
        return {"kind": self.kind, "bound": self.bound, "strict": self.strict,
                **self.poly.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(TrigPolynomial.from_dict(d), d.get("kind", "trig"),
                   d.get("bound"), d.get("strict", True))


def constant_weight(c=1.0):
    return WeightFunction(TrigPolynomial(base=c), "trig")


def cosine_weight(base=1.0, amplitudes=((1, 0, 0.5), (0, 1, 0.5)),
                  strict=None):
    """base + sum amp*cos(2 pi (k1 x1 + k2 x2)); amplitudes: (k1, k2, amp)."""
    terms = [((k1, k2), amp, 0.0) for k1, k2, amp in amplitudes]
    poly = TrigPolynomial(base, terms)
    if strict is None:
        strict = base > sum(abs(a) for _, _, a in amplitudes)
    return WeightFunction(poly, "trig", strict=strict)
