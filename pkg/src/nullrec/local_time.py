"""Symmetric local time at zero.

Two estimators are provided.  The band estimator divides the quadratic
variation accumulated inside ``|x| < h`` by ``2h``.  The Tanaka estimator
uses ``|x_t| - |x_0| - sum sgn(x) dx`` with ``sgn(0) = 0`` and is made
non-decreasing by a running maximum; the largest correction applied is
reported as ``clamp``.

Arrays may carry a trailing path axis: ``x`` of shape ``(n+1,)`` or
``(n+1, m)``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .sde import Observer


@dataclass
class LocalTimeProfile:
    """Local time at zero along a grid."""

    L: np.ndarray
    method: str
    band: Optional[float] = None
    clamp: object = 0.0
    dt: Optional[float] = None

    @property
    def final(self):
        return self.L[-1]


def default_band(dt, factor=2.0):
    """Band half-width ``factor * sqrt(dt)``."""
    return factor * np.sqrt(dt)


def sgn_sym(x):
    """Sign with ``sgn(0) = 0``."""
    return np.sign(x)


def local_time_band(x, qv_increments, band, dt=None):
    """Band estimator ``(1/2h) sum 1{|x_j| < h} dqv_j`` (left-point indicator).

    Parameters
    ----------
    x : ndarray, shape (n+1,) or (n+1, m)
    qv_increments : ndarray, shape (n,) or (n, m)
        Increments of the quadratic variation of ``x``, e.g. ``diff(x)**2``.
    band : float
        Half-width ``h``; must satisfy ``h >= sqrt(dt)`` when ``dt`` is given.
    """
    x = np.asarray(x, dtype=float)
    dq = np.asarray(qv_increments, dtype=float)
    if not band > 0:
        raise ValueError("band half-width must be positive")
    if dt is not None and band < np.sqrt(dt) * (1 - 1e-12):
        raise ValueError(f"band {band:.3g} is narrower than sqrt(dt)={np.sqrt(dt):.3g}")
    if dq.shape[0] != x.shape[0] - 1:
        raise ValueError("need one quadratic-variation increment per step")
    inc = (np.abs(x[:-1]) < band) * dq / (2.0 * band)
    L = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(inc, axis=0)])
    return LocalTimeProfile(L, "band", band=band, dt=dt)


def local_time_tanaka(x):
    """Tanaka estimator with a running-maximum clamp.

    ``clamp`` holds the largest amount by which the raw estimate was lifted
    (per path when ``x`` has a path axis).
    """
    x = np.asarray(x, dtype=float)
    dx = np.diff(x, axis=0)
    raw = np.abs(x) - np.abs(x[0]) - np.concatenate(
        [np.zeros((1,) + x.shape[1:]), np.cumsum(sgn_sym(x[:-1]) * dx, axis=0)])
    L = np.maximum.accumulate(np.maximum(raw, 0.0), axis=0)
    clamp = np.max(L - raw, axis=0)
    return LocalTimeProfile(L, "tanaka", clamp=clamp)


def off_band_increments(x, L, band):
    """Number of steps where ``L`` grows although ``|x|`` stays ``>= band``."""
    x = np.asarray(x)
    dL = np.diff(np.asarray(L), axis=0)
    return int(np.sum((dL != 0) & (np.abs(x[:-1]) >= band)))


class BandLocalTime(Observer):
    """Band estimator accumulated on the fly, recorded at the record steps."""

    name = "lt_band"

    def __init__(self, band):
        self.band = float(band)

    def start(self, n_paths, grid, record_steps):
        super().start(n_paths, grid, record_steps)
        self.acc = np.zeros(n_paths)
        self.out = np.zeros((n_paths, len(record_steps)))
        self._slot = {int(s): j for j, s in enumerate(record_steps)}

    def update(self, ctx):
        inside = np.abs(ctx.x) < self.band
        self.acc += inside * (ctx.x_new - ctx.x) ** 2 / (2.0 * self.band)
        j = self._slot.get(ctx.step + 1)
        if j is not None:
            self.out[:, j] = self.acc

    def result(self):
        return {self.name: self.out}


class TanakaLocalTime(Observer):
    """Tanaka estimator accumulated on the fly with its clamp diagnostic."""

    name = "lt_tanaka"

    def start(self, n_paths, grid, record_steps):
        super().start(n_paths, grid, record_steps)
        self.mart = np.zeros(n_paths)
        self.x0 = None
        self.run = np.zeros(n_paths)
        self.clamp = np.zeros(n_paths)
        self.out = np.zeros((n_paths, len(record_steps)))
        self._slot = {int(s): j for j, s in enumerate(record_steps)}

    def update(self, ctx):
        if self.x0 is None:
            self.x0 = np.abs(ctx.x)
        self.mart += sgn_sym(ctx.x) * (ctx.x_new - ctx.x)
        raw = np.abs(ctx.x_new) - self.x0 - self.mart
        np.maximum(self.run, raw, out=self.run)
        np.maximum(self.clamp, self.run - raw, out=self.clamp)
        j = self._slot.get(ctx.step + 1)
        if j is not None:
            self.out[:, j] = self.run

    def result(self):
        return {self.name: self.out, self.name + "_clamp": self.clamp}
