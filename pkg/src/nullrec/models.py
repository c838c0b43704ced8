"""Registry of bundled coefficient sets.

Each entry is a factory taking keyword overrides and returning a
:class:`~nullrec.coefficients.CoefficientSet`.  Registered sets pickle by
name and parameters, which is how they travel to worker processes.
"""

import numpy as np
from scipy.special import erfc

from .coefficients import CoefficientSet

SQRT_PI = float(np.sqrt(np.pi))

_REGISTRY = {}


def register(name, description):
    def wrap(factory):
        _REGISTRY[name] = (factory, description)
        return factory
    return wrap


def list_models():
    """Mapping of registered model names to one-line descriptions."""
    return {k: v[1] for k, v in sorted(_REGISTRY.items())}


def get_model(name, **params):
    """Instantiate a registered model with parameter overrides."""
    if name not in _REGISTRY:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(sorted(_REGISTRY))}")
    cs = _REGISTRY[name][0](**params)
    cs.registry_name = name
    cs.params = dict(params)
    return cs


# building blocks

def _gauss_tail(R):
    # int_{|x|>R} exp(-x^2)
    return SQRT_PI * erfc(R)


def _zeros(n, *shape):
    return np.zeros((n,) + shape)


def _linear_b1(rate, d):
    rate = float(rate)
    b1 = lambda y: -rate * y
    jac = lambda y: np.broadcast_to(-rate * np.eye(d), (y.shape[0], d, d)).copy()
    return b1, jac


def _const_b1(value, d):
    value = np.broadcast_to(np.asarray(value, dtype=float), (d,))
    b1 = lambda y: np.broadcast_to(value, y.shape).copy()
    jac = lambda y: np.zeros((y.shape[0], d, d))
    return b1, jac


def _unit_phi(k):
    def phi(x, y):
        out = np.zeros((x.shape[0], k))
        out[:, 0] = 1.0
        return out
    return phi


@register("trivial", "Brownian fast part, all slow coefficients zero")
def trivial(d=1):
    b1, jac = _const_b1(0.0, d)
    return CoefficientSet(
        "trivial", d, 1, _unit_phi(1), b1, jac,
        lambda x, y: _zeros(x.shape[0], d), lambda x, y: _zeros(x.shape[0], d, 1),
        lambda x: np.zeros_like(x), lambda x: np.zeros_like(x), 0.5, 2.0,
        b_hat_tail=lambda R: 0.0, sigma_hat_sq_tail=lambda R: 0.0,
        analytic_refs={"a_plus": 1.0, "a_minus": 1.0, "beta": np.zeros(d), "alpha": np.zeros((d, d))})


@register("sine_speed", "|phi|^2 = 2 + sin(x); speeds sqrt(3) on both sides")
def sine_speed():
    b1, jac = _const_b1(0.0, 1)
    return CoefficientSet(
        "sine_speed", 1, 1, lambda x, y: np.sqrt(2.0 + np.sin(x))[:, None], b1, jac,
        lambda x, y: _zeros(x.shape[0], 1), lambda x, y: _zeros(x.shape[0], 1, 1),
        lambda x: np.zeros_like(x), lambda x: np.zeros_like(x), 0.9, 3.1,
        b_hat_tail=lambda R: 0.0, sigma_hat_sq_tail=lambda R: 0.0,
        analytic_refs={"a_plus": float(np.sqrt(3.0)), "a_minus": float(np.sqrt(3.0))})


@register("gaussian_drift", "unit speed, drift exp(-x^2), no slow noise, constant slow drift")
def gaussian_drift(b1_const=0.5):
    b1, jac = _const_b1(b1_const, 1)
    return CoefficientSet(
        "gaussian_drift", 1, 1, _unit_phi(1), b1, jac,
        lambda x, y: np.exp(-x ** 2)[:, None], lambda x, y: _zeros(x.shape[0], 1, 1),
        lambda x: np.exp(-x ** 2), lambda x: np.zeros_like(x), 0.5, 2.0,
        b_hat_tail=_gauss_tail, sigma_hat_sq_tail=lambda R: 0.0,
        analytic_refs={"a_plus": 1.0, "a_minus": 1.0, "beta": np.array([SQRT_PI]),
                       "alpha": np.zeros((1, 1))})


@register("gaussian_diffusion", "unit speed, slow noise exp(-x^2/2) I_d, linear slow drift -rate*y")
def gaussian_diffusion(d=1, rate=1.0):
    k = d + 1
    b1, jac = _linear_b1(rate, d)

    def sigma(x, y):
        out = np.zeros((x.shape[0], d, k))
        out[:, :, 1:] = np.exp(-0.5 * x ** 2)[:, None, None] * np.eye(d)
        return out

    return CoefficientSet(
        "gaussian_diffusion", d, k, _unit_phi(k), b1, jac,
        lambda x, y: _zeros(x.shape[0], d), sigma,
        lambda x: np.zeros_like(x), lambda x: d * np.exp(-x ** 2), 0.5, 2.0,
        b_hat_tail=lambda R: 0.0, sigma_hat_sq_tail=lambda R: d * _gauss_tail(R),
        analytic_refs={"a_plus": 1.0, "a_minus": 1.0, "beta": np.zeros(d),
                       "alpha": SQRT_PI * np.eye(d)})


@register("gaussian_longtime", "unit speed, drift exp(-x^2) and noise exp(-x^2/2) on one slow coordinate")
def gaussian_longtime():
    b1, jac = _const_b1(0.0, 1)

    def sigma(x, y):
        out = np.zeros((x.shape[0], 1, 2))
        out[:, 0, 1] = np.exp(-0.5 * x ** 2)
        return out

    return CoefficientSet(
        "gaussian_longtime", 1, 2, _unit_phi(2), b1, jac,
        lambda x, y: np.exp(-x ** 2)[:, None], sigma,
        lambda x: np.exp(-x ** 2), lambda x: np.exp(-x ** 2), 0.5, 2.0,
        b_hat_tail=_gauss_tail, sigma_hat_sq_tail=_gauss_tail,
        analytic_refs={"a_plus": 1.0, "a_minus": 1.0, "beta": np.array([SQRT_PI]),
                       "alpha": np.array([[SQRT_PI]])})


@register("tanh_interface", "asymmetric speeds a_plus/a_minus via tanh, slow noise exp(-x^2/2)")
def tanh_interface(a_plus=4.0, a_minus=1.0, rate=1.0, drift=0.0):
    mid, half = 0.5 * (a_plus + a_minus), 0.5 * (a_plus - a_minus)
    b1, jac = _linear_b1(rate, 1)

    def phi(x, y):
        out = np.zeros((x.shape[0], 2))
        out[:, 0] = np.sqrt(mid + half * np.tanh(x))
        return out

    def sigma(x, y):
        out = np.zeros((x.shape[0], 1, 2))
        out[:, 0, 1] = np.exp(-0.5 * x ** 2)
        return out

    lo, hi = min(a_plus, a_minus), max(a_plus, a_minus)
    return CoefficientSet(
        "tanh_interface", 1, 2, phi, b1, jac,
        lambda x, y: drift * np.exp(-x ** 2)[:, None], sigma,
        lambda x: abs(drift) * np.exp(-x ** 2), lambda x: np.exp(-x ** 2), 0.9 * lo, 1.1 * hi,
        b_hat_tail=lambda R: abs(drift) * _gauss_tail(R), sigma_hat_sq_tail=_gauss_tail,
        analytic_refs={"a_plus": float(a_plus), "a_minus": float(a_minus)})


@register("box", "piecewise-constant drift and noise with breakpoints; speed 2")
def box():
    b1, jac = _const_b1(0.0, 1)
    ind = lambda x, a, b: ((x >= a) & (x <= b)).astype(float)

    def phi(x, y):
        return np.full((x.shape[0], 1), np.sqrt(2.0))

    def sigma(x, y):
        return ind(x, 0.0, 2.0)[:, None, None]

    return CoefficientSet(
        "box", 1, 1, phi, b1, jac, lambda x, y: ind(x, -1.0, 1.0)[:, None], sigma,
        lambda x: ind(x, -1.0, 1.0), lambda x: ind(x, 0.0, 2.0), 1.0, 3.0,
        b_hat_tail=lambda R: 2.0 * max(0.0, 1.0 - R), sigma_hat_sq_tail=lambda R: max(0.0, 2.0 - R),
        breakpoints=(-1.0, 0.0, 1.0, 2.0),
        analytic_refs={"a_plus": 2.0, "a_minus": 2.0, "beta": np.array([1.0]),
                       "alpha": np.array([[1.0]])})


@register("odd_drift", "odd drift x exp(-x^2) against an even speed; interface drift zero")
def odd_drift():
    b1, jac = _const_b1(0.0, 1)
    return CoefficientSet(
        "odd_drift", 1, 1, lambda x, y: np.sqrt(1.0 + 0.5 * np.exp(-x ** 2))[:, None], b1, jac,
        lambda x, y: (x * np.exp(-x ** 2))[:, None], lambda x, y: _zeros(x.shape[0], 1, 1),
        lambda x: np.abs(x) * np.exp(-x ** 2), lambda x: np.zeros_like(x), 0.9, 1.6,
        b_hat_tail=lambda R: float(np.exp(-R ** 2)), sigma_hat_sq_tail=lambda R: 0.0,
        analytic_refs={"a_plus": 1.0, "a_minus": 1.0, "beta": np.zeros(1)})


@register("modulated", "y-dependent drift and noise amplitudes on a Gaussian profile")
def modulated():
    b1, jac = _const_b1(0.0, 1)

    def b2(x, y):
        return (np.exp(-x ** 2) * (1.0 + 0.5 * np.tanh(y[:, 0])))[:, None]

    def sigma(x, y):
        out = np.zeros((x.shape[0], 1, 2))
        out[:, 0, 1] = np.exp(-0.5 * x ** 2) * (1.0 + 0.25 * np.cos(y[:, 0]))
        return out

    return CoefficientSet(
        "modulated", 1, 2, _unit_phi(2), b1, jac, b2, sigma,
        lambda x: 1.5 * np.exp(-x ** 2), lambda x: 1.5625 * np.exp(-x ** 2), 0.5, 2.0,
        b_hat_tail=lambda R: 1.5 * _gauss_tail(R), sigma_hat_sq_tail=lambda R: 1.5625 * _gauss_tail(R),
        y_independent=False,
        analytic_refs={"beta_fn": "sqrt(pi)*(1+tanh(y)/2)", "alpha_fn": "sqrt(pi)*(1+cos(y)/4)^2"})
