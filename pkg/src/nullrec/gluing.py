"""Test functions that satisfy the interface gluing condition.

A base function is a product of one-dimensional factors ``v^q * kappa(|v|)``
in the fast coordinate and in each slow coordinate, where ``kappa`` is a
smooth cutoff equal to one on ``[0, plateau]`` and zero beyond ``radius``.
The glued function subtracts ``|x| kappa(|x|) C(w)`` with
``C(w) = beta . grad u(0, w) + 1/2 alpha : hess u(0, w)``, so that

    1/2 f_x(0+) - 1/2 f_x(0-) + beta . grad f(0, w) + 1/2 alpha : hess f(0, w) = 0.

All derivatives are analytic.
"""

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from numpy.polynomial import Polynomial

# septic smoothstep: first three derivatives vanish at both ends
_STEP = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])
_STEP_D = [_STEP.deriv(j) for j in range(4)]


def cutoff_derivs(r, plateau=3.0, radius=5.0, order=3):
    """``kappa`` and its first ``order`` derivatives at ``r >= 0``."""
    width = radius - plateau
    r = np.asarray(r, dtype=float)
    out = [(r < radius).astype(float)] + [np.zeros(r.shape) for _ in range(order)]
    mid = (r > plateau) & (r < radius)
    if np.any(mid):
        s = (r[mid] - plateau) / width
        out[0][mid] = 1.0 - _STEP_D[0](s)
        for j in range(1, order + 1):
            out[j][mid] = -_STEP_D[j](s) / width ** j
    return out


def _power_derivs(v, q, order):
    """Derivatives ``0..order`` of ``v^q``."""
    return [factorial(q) / factorial(q - i) * v ** (q - i) if i <= q else np.zeros_like(v)
            for i in range(order + 1)]


def factor_derivs(v, q, plateau=3.0, radius=5.0, order=3):
    """Derivatives ``0..order`` of ``g(v) = v^q kappa(|v|)``."""
    v = np.asarray(v, dtype=float)
    r = np.abs(v)
    out = [np.zeros(v.shape) for _ in range(order + 1)]
    inner = r <= plateau
    if np.any(inner):
        for n, p in enumerate(_power_derivs(v[inner], q, order)):
            out[n][inner] = p
    mid = (r > plateau) & (r < radius)
    if np.any(mid):
        vm = v[mid]
        sg = np.sign(vm)
        kd = cutoff_derivs(np.abs(vm), plateau, radius, order)
        kd = [kd[j] * (sg if j % 2 else 1.0) for j in range(order + 1)]
        pw = _power_derivs(vm, q, order)
        for n in range(order + 1):
            out[n][mid] = sum(comb(n, i) * pw[i] * kd[n - i] for i in range(n + 1))
    return out


@dataclass
class GluingFunction:
    """Polynomial-times-cutoff function corrected to satisfy the gluing condition.

    Parameters
    ----------
    px : int
        Power of the fast coordinate.
    qs : tuple of int
        Powers of the slow coordinates.
    beta : ndarray, shape (m,)
    alpha : ndarray, shape (m, m)
    corrected : bool
        When false the interface correction is dropped; such functions serve
        as negative controls.
    """

    px: int
    qs: tuple
    beta: np.ndarray
    alpha: np.ndarray
    corrected: bool = True
    plateau: float = 3.0
    radius: float = 5.0
    label: str = field(default="")

    def __post_init__(self):
        self.qs = tuple(int(q) for q in self.qs)
        self.beta = np.asarray(self.beta, dtype=float).reshape(len(self.qs))
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(len(self.qs), len(self.qs))
        if not self.label:
            tag = "" if self.corrected else "_raw"
            self.label = f"x{self.px}_w{''.join(map(str, self.qs))}{tag}"

    @property
    def m(self):
        return len(self.qs)

    def _wfactors(self, w):
        return [factor_derivs(w[..., i], q, self.plateau, self.radius) for i, q in enumerate(self.qs)]

    def _prod(self, fac, counts):
        out = 1.0
        for i, n in enumerate(counts):
            out = out * fac[i][n]
        return out

    def _unit(self, i, j=None, k=None):
        c = [0] * self.m
        for a in (i, j, k):
            if a is not None:
                c[a] += 1
        return c

    def _corr(self, fac):
        """``C(w)`` and its gradient, from slow-factor derivatives."""
        x0 = factor_derivs(np.zeros(1), self.px, self.plateau, self.radius)[0][0]
        m = self.m
        C = 0.0
        dC = [0.0] * m
        for i in range(m):
            C = C + self.beta[i] * self._prod(fac, self._unit(i))
            for j in range(m):
                C = C + 0.5 * self.alpha[i, j] * self._prod(fac, self._unit(i, j))
        for l in range(m):
            for i in range(m):
                dC[l] = dC[l] + self.beta[i] * self._prod(fac, self._unit(i, l))
                for j in range(m):
                    dC[l] = dC[l] + 0.5 * self.alpha[i, j] * self._prod(fac, self._unit(i, j, l))
        scale = x0 if self.corrected else 0.0
        return scale * C, [scale * g for g in dC]

    def _fast(self, x):
        g = factor_derivs(x, self.px, self.plateau, self.radius)
        h = factor_derivs(x, 1, self.plateau, self.radius)
        sg = np.where(x >= 0.0, 1.0, -1.0)
        # m(x) = |x| kappa(|x|) and its one-sided derivatives
        return g, [sg * h[0], sg * h[1], sg * h[2]]

    def value(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        fac = self._wfactors(w)
        g, mm = self._fast(x)
        C, _ = self._corr(fac)
        return g[0] * self._prod(fac, [0] * self.m) - mm[0] * C

    def dxx(self, x, w):
        """Second derivative in ``x`` away from ``x = 0``."""
        fac = self._wfactors(np.asarray(w, dtype=float))
        g, mm = self._fast(np.asarray(x, dtype=float))
        C, _ = self._corr(fac)
        return g[2] * self._prod(fac, [0] * self.m) - mm[2] * C

    def grad_w(self, x, w):
        fac = self._wfactors(np.asarray(w, dtype=float))
        g, mm = self._fast(np.asarray(x, dtype=float))
        _, dC = self._corr(fac)
        return np.stack([g[0] * self._prod(fac, self._unit(i)) - mm[0] * dC[i]
                         for i in range(self.m)], axis=-1)

    def hess_w(self, x, w):
        """Hessian in the slow coordinates (only needed at ``x = 0``)."""
        fac = self._wfactors(np.asarray(w, dtype=float))
        g, _ = self._fast(np.asarray(x, dtype=float))
        return np.stack([np.stack([g[0] * self._prod(fac, self._unit(i, j)) for j in range(self.m)],
                                  axis=-1) for i in range(self.m)], axis=-2)

    def dx_side(self, w, side):
        """One-sided derivative ``f_x(0+)`` (side=+1) or ``f_x(0-)`` (side=-1)."""
        w = np.asarray(w, dtype=float)
        fac = self._wfactors(w)
        z = np.zeros(w.shape[:-1])
        g = factor_derivs(z, self.px, self.plateau, self.radius)
        h1 = factor_derivs(z, 1, self.plateau, self.radius)[1]
        C, _ = self._corr(fac)
        return g[1] * self._prod(fac, [0] * self.m) - side * h1 * C

    def generator_terms(self, x, w):
        """``f_xx`` (away from zero) and ``grad_w f`` sharing one factor evaluation."""
        fac = self._wfactors(np.asarray(w, dtype=float))
        g, mm = self._fast(np.asarray(x, dtype=float))
        C, dC = self._corr(fac)
        p0 = self._prod(fac, [0] * self.m)
        fxx = g[2] * p0 - mm[2] * C
        grad = np.stack([g[0] * self._prod(fac, self._unit(i)) - mm[0] * dC[i] for i in range(self.m)],
                        axis=-1)
        return fxx, grad

    def gluing_residual(self, w):
        """Left side of the gluing condition at ``(0, w)``."""
        w = np.asarray(w, dtype=float)
        z = np.zeros(w.shape[:-1])
        jump = 0.5 * self.dx_side(w, 1) - 0.5 * self.dx_side(w, -1)
        drift = np.einsum("...i,i->...", self.grad_w(z, w), self.beta)
        diff = 0.5 * np.einsum("...ij,ij->...", self.hess_w(z, w), self.alpha)
        return jump + drift + diff


def standard_family(beta, alpha, n=6):
    """A family of at least five glued functions for slow dimension ``len(beta)``."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    m = beta.shape[0]
    e = lambda i, p: tuple(p if j == i else 0 for j in range(m))
    shapes = [(0, e(0, 1)), (0, e(0, 2)), (1, e(0, 1)), (2, e(0, 0)), (1, e(0, 0)),
              (0, e(m - 1, 3)), (2, e(0, 1)), (1, e(0, 2))]
    return [GluingFunction(px, qs, beta, alpha) for px, qs in shapes[:max(5, n)]]


def negative_control(beta, alpha, plateau=20.0, radius=30.0):
    """An uncorrected function whose interface term does not vanish.

    Uses the first slow coordinate when the drift is non-zero there and
    its square otherwise, so that the missing correction is ``beta_1`` or
    ``alpha_11`` per unit local time.  The wide cutoff keeps the slow
    coordinate on the plateau.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    m = beta.shape[0]
    q = 1 if abs(beta[0]) > 0 else 2
    return GluingFunction(0, tuple(q if j == 0 else 0 for j in range(m)), beta, alpha, corrected=False,
                          plateau=plateau, radius=radius, label=f"control_w{q}")
