"""Coefficient sets and the averaged interface data they induce.

A :class:`CoefficientSet` bundles vectorised callables for the fast
diffusion vector ``phi``, the slow drifts ``b1`` and ``b2`` and the slow
diffusion ``sigma``.  Shapes follow one convention throughout the package:
``x`` is ``(n,)``, ``y`` is ``(n, d)``, ``phi`` returns ``(n, k)``, ``b1`` and
``b2`` return ``(n, d)``, ``b1_jac`` returns ``(n, d, d)`` and ``sigma``
returns ``(n, d, k)``.  The integrable envelopes ``b_hat`` and
``sigma_hat_sq`` map ``x`` of shape ``(n,)`` to ``(n,)``.

The averaged data consist of the one-sided speeds ``a_plus`` and
``a_minus`` (reciprocals of one-sided Cesaro means of ``1/|phi|^2``), the
interface drift ``beta(y) = int b2/|phi|^2 dx`` and the interface diffusion
``alpha(y) = int sigma sigma^T/|phi|^2 dx``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate


class AssumptionViolation(ValueError):
    """Raised when a coefficient set fails its structural checks."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class TailBoundError(RuntimeError):
    """Raised when an improper integral cannot be certified to tolerance."""


def _rebuild(name, params):
    from .models import get_model
    return get_model(name, **params)


def batch(x, y, d):
    """Broadcast ``x`` to ``(n,)`` and ``y`` to ``(n, d)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim <= 1:
        y = np.broadcast_to(y.reshape(1, d), (x.shape[0], d))
    return x, y


@dataclass(eq=False)
class CoefficientSet:
    """Coefficients of a fast-slow system with a null-recurrent fast part.

    Parameters
    ----------
    name : str
        Human readable identifier.
    d, k : int
        Slow dimension and Brownian dimension.
    phi, b1, b1_jac, b2, sigma : callable
        Vectorised coefficient callables, see the module docstring.
    b_hat, sigma_hat_sq : callable
        Integrable envelopes with ``|b2(x, y)| <= b_hat(x)`` and
        ``|sigma(x, y)|^2 <= sigma_hat_sq(x)`` uniformly in ``y``.
    c1, c2 : float
        Ellipticity bounds with ``c1 < |phi|^2 < c2``.
    b_hat_tail, sigma_hat_sq_tail : callable, optional
        Exact tail masses ``R -> int_{|x|>R}`` of the envelopes.  When absent
        tails are extrapolated from the decay of the envelope.
    breakpoints : tuple of float
        Known non-smooth points, passed on to the quadrature.
    y_independent : bool
        Whether ``phi``, ``b2`` and ``sigma`` ignore ``y``.
    analytic_refs : dict
        Closed-form values of averaged quantities, used by tests and reports.
    """

    name: str
    d: int
    k: int
    phi: Callable
    b1: Callable
    b1_jac: Callable
    b2: Callable
    sigma: Callable
    b_hat: Callable
    sigma_hat_sq: Callable
    c1: float
    c2: float
    b_hat_tail: Optional[Callable] = None
    sigma_hat_sq_tail: Optional[Callable] = None
    breakpoints: tuple = ()
    y_independent: bool = True
    analytic_refs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    registry_name: Optional[str] = None

    def __reduce__(self):
        if self.registry_name is None:
            raise TypeError(f"coefficient set {self.name!r} is not registered and cannot be pickled")
        return (_rebuild, (self.registry_name, dict(self.params)))

    def phi_sq(self, x, y):
        x, y = batch(x, y, self.d)
        return np.sum(self.phi(x, y) ** 2, axis=-1)

    def _vanishes(self, fn):
        x = np.linspace(-20.0, 20.0, 801)
        for yv in (-2.0, -0.5, 0.0, 0.7, 3.0):
            _, y = batch(x, np.full(self.d, yv), self.d)
            if np.any(fn(x, y) != 0.0):
                return False
        return True

    @property
    def sigma_vanishes(self):
        return self._vanishes(self.sigma)

    @property
    def b2_vanishes(self):
        return self._vanishes(self.b2)

    @property
    def b1_vanishes(self):
        return self._vanishes(lambda x, y: self.b1(y))


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_assumptions`."""

    n_samples: int
    phi_sq_min: float
    phi_sq_max: float
    ellipticity_violations: int
    b_hat_violations: int
    sigma_hat_violations: int
    b_hat_l1: float
    b_hat_l1_err: float
    sigma_hat_sq_l1: float
    sigma_hat_sq_l1_err: float
    messages: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.messages


def validate_assumptions(coeffs, sample_box=((-30.0, 30.0), (-5.0, 5.0)), n_samples=20000,
                         seed=0, strict=True, abs_tol=1e-8):
    """Sample the structural assumptions of a coefficient set.

    Checks ellipticity ``c1 < |phi|^2 < c2``, the domination of ``b2`` and
    ``sigma`` by their envelopes, and finiteness of the envelope integrals.

    Parameters
    ----------
    sample_box : ((x_lo, x_hi), (y_lo, y_hi))
        Sampling box; the ``y`` range applies to every slow coordinate.
    strict : bool
        Raise :class:`AssumptionViolation` (with the report attached) when a
        check fails.  Otherwise return the report.
    """
    rng = np.random.default_rng(seed)
    (xl, xh), (yl, yh) = sample_box
    x = rng.uniform(xl, xh, n_samples)
    y = rng.uniform(yl, yh, (n_samples, coeffs.d))
    ph2 = np.sum(coeffs.phi(x, y) ** 2, axis=-1)
    ell = int(np.sum((ph2 <= coeffs.c1) | (ph2 >= coeffs.c2)))
    bn = np.linalg.norm(coeffs.b2(x, y), axis=-1)
    bv = int(np.sum(bn > coeffs.b_hat(x) * (1 + 1e-9) + 1e-12))
    sn = np.sum(coeffs.sigma(x, y) ** 2, axis=(-2, -1))
    sv = int(np.sum(sn > coeffs.sigma_hat_sq(x) * (1 + 1e-9) + 1e-12))

    msgs = []
    if ell:
        msgs.append(f"{ell} samples violate {coeffs.c1} < |phi|^2 < {coeffs.c2}")
    if bv:
        msgs.append(f"{bv} samples exceed the drift envelope")
    if sv:
        msgs.append(f"{sv} samples exceed the diffusion envelope")

    def l1(env, tail):
        try:
            v, e = improper_integral(lambda s: np.atleast_1d(env(np.atleast_1d(s))), abs_tol,
                                     tail=tail, envelope=env, breakpoints=coeffs.breakpoints)
            return float(v[0]), float(e[0])
        except TailBoundError as exc:
            msgs.append(str(exc))
            return np.inf, np.inf

    b_l1, b_err = l1(coeffs.b_hat, coeffs.b_hat_tail)
    s_l1, s_err = l1(coeffs.sigma_hat_sq, coeffs.sigma_hat_sq_tail)
    report = ValidationReport(n_samples, float(ph2.min()), float(ph2.max()), ell, bv, sv,
                              b_l1, b_err, s_l1, s_err, msgs)
    if strict and msgs:
        raise AssumptionViolation("; ".join(msgs), report)
    return report


def _geometric_tail(envelope, R, breakpoints=()):
    """Estimate ``int_{|x|>R} envelope`` from two successive dyadic shells."""
    def shell(a, b):
        g = lambda s: float(envelope(np.array([s]))[0])
        pts = [p for p in breakpoints if a < abs(p) < b]
        pos = integrate.quad(g, a, b, limit=200, points=[p for p in pts if p > 0] or None)[0]
        neg = integrate.quad(g, -b, -a, limit=200, points=[p for p in pts if p < 0] or None)[0]
        return pos + neg

    i1 = shell(R, 2 * R)
    i2 = shell(2 * R, 4 * R)
    if i1 <= 0.0:
        return 0.0 if i2 <= 0.0 else np.inf
    r = i2 / i1
    return i1 / (1.0 - r) if r < 0.75 else np.inf


def improper_integral(f, abs_tol, tail=None, envelope=None, breakpoints=(), r0=8.0, r_max=2.0 ** 16):
    """Integrate a vector-valued function over the real line.

    The range ``[-R, R]`` is doubled until the tail bound drops below
    ``abs_tol / 2``; the finite part is integrated component-wise with
    ``scipy.integrate.quad`` to ``abs_tol / 2``.

    Parameters
    ----------
    f : callable
        Maps a float to a 1-d array.
    tail : callable, optional
        Exact or upper-bound tail mass ``R -> int_{|x|>R} |f|``.
    envelope : callable, optional
        Vectorised dominating function used for geometric tail extrapolation
        when ``tail`` is absent.  Defaults to the max-norm of ``f``.

    Returns
    -------
    value, error : ndarray
        Integral and error bound per component.
    """
    if envelope is None:
        envelope = lambda s: np.array([np.max(np.abs(f(float(v)))) for v in np.atleast_1d(s)])
    R = r0
    while True:
        t = tail(R) if tail is not None else _geometric_tail(envelope, R, breakpoints)
        if t <= abs_tol / 2:
            break
        R *= 2.0
        if R > r_max:
            raise TailBoundError(f"tail mass still {t:.3g} at R={R / 2:g}")

    pts = {0.0}
    s = 1.0
    while s < R:
        pts.update((s, -s))
        s *= 2.0
    pts.update(p for p in breakpoints if -R < p < R)
    pts = sorted(pts)
    m = np.atleast_1d(f(0.0)).shape[0]
    val = np.zeros(m)
    err = np.zeros(m)
    for c in range(m):
        v, e = integrate.quad(lambda s: float(np.atleast_1d(f(s))[c]), -R, R, points=pts,
                              limit=max(400, 8 * len(pts)), epsabs=abs_tol / 2, epsrel=0.0)
        val[c], err[c] = v, e + t
    return val, err


def interface_drift_beta(coeffs, y, abs_tol=1e-8):
    """Interface drift ``int b2(x, y)/|phi(x, y)|^2 dx`` and its error bound."""
    y = np.asarray(y, dtype=float).reshape(1, coeffs.d)

    def g(s):
        xs = np.array([s])
        return coeffs.b2(xs, y)[0] / np.sum(coeffs.phi(xs, y)[0] ** 2)

    tail = None if coeffs.b_hat_tail is None else (lambda R: coeffs.b_hat_tail(R) / coeffs.c1)
    env = lambda s: coeffs.b_hat(s) / coeffs.c1
    return improper_integral(g, abs_tol, tail=tail, envelope=env, breakpoints=coeffs.breakpoints)


def interface_diffusion_alpha(coeffs, y, abs_tol=1e-8):
    """Interface diffusion ``int sigma sigma^T/|phi|^2 dx`` (symmetric) and error."""
    d = coeffs.d
    y = np.asarray(y, dtype=float).reshape(1, d)
    iu = np.triu_indices(d)

    def g(s):
        xs = np.array([s])
        sg = coeffs.sigma(xs, y)[0]
        return (sg @ sg.T)[iu] / np.sum(coeffs.phi(xs, y)[0] ** 2)

    tail = None if coeffs.sigma_hat_sq_tail is None else (
        lambda R: coeffs.sigma_hat_sq_tail(R) / coeffs.c1)
    env = lambda s: coeffs.sigma_hat_sq(s) / coeffs.c1
    v, e = improper_integral(g, abs_tol, tail=tail, envelope=env, breakpoints=coeffs.breakpoints)
    alpha = np.zeros((d, d))
    err = np.zeros((d, d))
    alpha[iu], err[iu] = v, e
    alpha = alpha + np.triu(alpha, 1).T
    err = err + np.triu(err, 1).T
    return alpha, err


@dataclass
class CesaroEstimate:
    """One-sided speeds with a convergence diagnostic."""

    a_plus: float
    a_minus: float
    error: float
    converged: bool
    u_max: float


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _cumulative_mean(g, u_max, checkpoints, panel):
    """Means ``(1/u) int_0^u g`` at the checkpoints by Gauss-Legendre panels."""
    n_panels = int(round(u_max / panel))
    nodes = 0.5 * panel * (_GL_NODES + 1.0)
    w = 0.5 * panel * _GL_WEIGHTS
    sums = np.empty(n_panels)
    step = max(1, 2 ** 20 // len(nodes))
    for s in range(0, n_panels, step):
        left = panel * np.arange(s, min(s + step, n_panels))
        pts = (left[:, None] + nodes[None, :]).ravel()
        sums[s:s + len(left)] = (g(pts).reshape(len(left), -1) * w).sum(axis=1)
    csum = np.cumsum(sums)
    out = []
    for u in checkpoints:
        j = int(round(u / panel))
        out.append(csum[j - 1] / (j * panel))
    return np.array(out)


def estimate_a_pm(coeffs, y, u_max=1e5, panel=0.25, tol=1e-3):
    """One-sided speeds from Cesaro means of ``1/|phi|^2``.

    Means are evaluated at ``u_max/4``, ``u_max/2`` and ``u_max``; the
    reported error is the largest spread between those three estimates on
    either side.  The origin belongs to the ``+`` side.
    """
    y = np.asarray(y, dtype=float).reshape(1, coeffs.d)
    cps = (u_max / 4, u_max / 2, u_max)

    def side(sign):
        g = lambda u: 1.0 / np.sum(coeffs.phi(sign * u, np.broadcast_to(y, (u.shape[0], coeffs.d))) ** 2,
                                   axis=-1)
        a = 1.0 / _cumulative_mean(g, u_max, cps, panel)
        return a[-1], float(a.max() - a.min())

    ap, ep = side(1.0)
    am, em = side(-1.0)
    err = max(ep, em)
    if not (coeffs.c1 <= ap <= coeffs.c2 and coeffs.c1 <= am <= coeffs.c2):
        raise AssumptionViolation(f"speeds {ap:.4g}, {am:.4g} lie outside [{coeffs.c1}, {coeffs.c2}]")
    return CesaroEstimate(float(ap), float(am), err, err <= tol, u_max)


def matrix_sqrt_psd(m, jitter=1e-10, tol=1e-9):
    """Symmetric square root of a positive semi-definite matrix.

    Eigenvalues in ``[-tol, jitter]`` are clipped to zero; more negative
    eigenvalues raise ``ValueError``.
    """
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    if w.size and w.min() < -tol * max(1.0, abs(w).max()):
        raise ValueError(f"matrix is not positive semi-definite (min eigenvalue {w.min():.3g})")
    w = np.where(w <= jitter, 0.0, w)
    return (v * np.sqrt(w)) @ v.T


class AveragedInterfaceData:
    """Speeds, interface drift and interface diffusion as functions of ``y``.

    Values are stored as constants when the coefficients ignore ``y``, as a
    table interpolated linearly in ``y`` for one slow dimension, or computed
    on demand and cached otherwise.
    """

    def __init__(self, d, a_plus, a_minus, beta, alpha, y_independent=True,
                 quadrature_error=None, cesaro_error=0.0, source=None, bounds=None):
        self.d = int(d)
        self.bounds = bounds
        self._a_plus, self._a_minus = a_plus, a_minus
        self._beta, self._alpha = beta, alpha
        self.y_independent = bool(y_independent)
        self.quadrature_error = quadrature_error or {}
        self.cesaro_error = float(cesaro_error)
        self._source = source

    @classmethod
    def constant(cls, a_plus, a_minus, beta, alpha):
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
        return cls(beta.shape[0], float(a_plus), float(a_minus), beta, alpha)

    def __reduce__(self):
        if self._source is not None:
            return (_rebuild_average, self._source)
        return (AveragedInterfaceData, (self.d, self._a_plus, self._a_minus, self._beta, self._alpha,
                                        self.y_independent, self.quadrature_error, self.cesaro_error))

    def _eval(self, value, y, shape):
        y = np.asarray(y, dtype=float).reshape(-1, self.d)
        if callable(value):
            return value(y)
        return np.broadcast_to(value, (y.shape[0],) + shape).copy()

    def a_plus(self, y):
        return self._eval(self._a_plus, y, ())

    def a_minus(self, y):
        return self._eval(self._a_minus, y, ())

    def speed(self, x, y):
        """``a_plus`` where ``x >= 0`` and ``a_minus`` elsewhere."""
        return np.where(np.asarray(x) >= 0.0, self.a_plus(y), self.a_minus(y))

    def beta(self, y):
        return self._eval(self._beta, y, (self.d,))

    def alpha(self, y):
        return self._eval(self._alpha, y, (self.d, self.d))

    def constants(self):
        """``(a_plus, a_minus, beta, alpha)`` for ``y``-independent data."""
        if not self.y_independent:
            raise ValueError("averaged data depend on y")
        y0 = np.zeros(self.d)
        return (float(self.a_plus(y0)[0]), float(self.a_minus(y0)[0]),
                self.beta(y0)[0], self.alpha(y0)[0])

    def speed_bounds(self):
        """Lower and upper bounds of the speeds over all ``y``."""
        if not self.y_independent:
            if self.bounds is None:
                raise ValueError("speed bounds unknown for y-dependent data")
            return self.bounds
        y_samples = np.zeros((1, self.d))
        ap, am = self.a_plus(y_samples), self.a_minus(y_samples)
        return float(min(ap.min(), am.min())), float(max(ap.max(), am.max()))


def _rebuild_average(coeffs, kwargs):
    return average_interface(coeffs, **kwargs)


def _point_values(coeffs, y, abs_tol, u_max):
    ces = estimate_a_pm(coeffs, y, u_max=u_max)
    beta, be = interface_drift_beta(coeffs, y, abs_tol)
    alpha, ae = interface_diffusion_alpha(coeffs, y, abs_tol)
    return ces, beta, be, alpha, ae


def average_interface(coeffs, abs_tol=1e-8, u_max=1e5, y_grid=None):
    """Averaged interface data of a coefficient set.

    Parameters
    ----------
    y_grid : array_like, optional
        Tabulation nodes for ``y``-dependent models with one slow
        coordinate.  Values outside the grid are clamped to the end nodes.
    """
    d = coeffs.d
    kwargs = dict(abs_tol=abs_tol, u_max=u_max,
                  y_grid=None if y_grid is None else np.asarray(y_grid, dtype=float))
    if coeffs.y_independent:
        ces, beta, be, alpha, ae = _point_values(coeffs, np.zeros(d), abs_tol, u_max)
        return AveragedInterfaceData(d, ces.a_plus, ces.a_minus, beta, alpha, True,
                                     {"beta": be, "alpha": ae}, ces.error, (coeffs, kwargs))
    if y_grid is not None and d == 1:
        grid = np.sort(np.asarray(y_grid, dtype=float))
        vals = [_point_values(coeffs, np.array([g]), abs_tol, u_max) for g in grid]
        ap = np.array([v[0].a_plus for v in vals])
        am = np.array([v[0].a_minus for v in vals])
        bt = np.array([v[1][0] for v in vals])
        al = np.array([v[3][0, 0] for v in vals])
        interp = lambda tab: (lambda y: np.interp(np.asarray(y).reshape(-1), grid, tab))
        return AveragedInterfaceData(
            1, interp(ap), interp(am),
            lambda y: interp(bt)(y)[:, None], lambda y: interp(al)(y)[:, None, None], False,
            {"beta": max(np.max(v[2]) for v in vals), "alpha": max(np.max(v[4]) for v in vals)},
            max(v[0].error for v in vals), (coeffs, kwargs), (coeffs.c1, coeffs.c2))

    cache = {}

    def lookup(y):
        key = tuple(np.round(y, 12))
        if key not in cache:
            cache[key] = _point_values(coeffs, np.asarray(key), abs_tol, u_max)
        return cache[key]

    def field_of(pick):
        return lambda y: np.array([pick(lookup(row)) for row in np.asarray(y).reshape(-1, d)])

    return AveragedInterfaceData(d, field_of(lambda v: v[0].a_plus), field_of(lambda v: v[0].a_minus),
                                 field_of(lambda v: v[1]), field_of(lambda v: v[3]), False,
                                 {}, 0.0, (coeffs, kwargs), (coeffs.c1, coeffs.c2))
