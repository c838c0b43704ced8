"""Euler-Maruyama simulation of the fast-slow system.

Two regimes share one kernel.  In the ``standard`` regime the fast
coordinate enters the coefficients as ``x/eps`` and the slow coordinate
sees ``b1(y) + b2`` and ``sigma`` at unit strength.  In the ``longtime``
regime the fast coordinate enters as ``x/eps^2``, the slow drift is
``eps^-2 b2`` and the slow noise is ``eps^-1 sigma``; ``b1`` must vanish and
the fast coordinate starts from ``eps * x0``.

Both coordinates are driven by the same Brownian increment, drawn from the
per-path streams of :mod:`nullrec.streams`.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from . import records
from .streams import PRELIMIT, PathNoise, ordered_map, path_blocks

REGIMES = ("standard", "longtime")


class StepSizeError(ValueError):
    """Raised when the step exceeds the regime's stability bound."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 + j*dt`` for ``j = 0..n_steps``."""

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and self.n_steps > 0):
            raise ValueError("grid needs dt > 0 and at least one step")

    @classmethod
    def covering(cls, horizon, max_dt, t0=0.0):
        """Coarsest grid on ``[t0, t0 + horizon]`` with ``dt <= max_dt``."""
        n = int(np.ceil(horizon / max_dt - 1e-9))
        return cls(float(t0), float(horizon) / n, n)

    @property
    def horizon(self):
        return self.t0 + self.dt * self.n_steps

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def nearest_index(self, t):
        """Indices of the grid points closest to ``t`` (clipped to the grid)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.clip(np.rint((t - self.t0) / self.dt).astype(np.int64), 0, self.n_steps)

    def index_of(self, t):
        """Grid indices of times that lie on the grid."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        j = np.rint((t - self.t0) / self.dt).astype(np.int64)
        if np.any(np.abs(self.t0 + j * self.dt - t) > 1e-9 * max(1.0, abs(self.horizon))) \
                or np.any((j < 0) | (j > self.n_steps)):
            raise ValueError(f"times {t} are not grid points of {self}")
        return j


def step_bound(eps, regime="standard", step_safety=0.1):
    """Largest admissible step: ``safety*eps^2`` or ``safety*eps^4``."""
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    return step_safety * eps ** (2 if regime == "standard" else 4)


def grid_for(eps, horizon, regime="standard", step_safety=0.1):
    return TimeGrid.covering(horizon, step_bound(eps, regime, step_safety))


def check_step(grid, eps, regime, step_safety):
    bound = step_bound(eps, regime, step_safety)
    if grid.dt > bound * (1 + 1e-12):
        raise StepSizeError(f"dt={grid.dt:.3g} exceeds {step_safety}*eps^"
                            f"{2 if regime == 'standard' else 4}={bound:.3g} for eps={eps}")


@dataclass
class StepContext:
    """State handed to observers at each step (left-point values)."""

    step: int
    t: float
    dt: float
    eps: float
    x: np.ndarray
    y: np.ndarray
    x_new: np.ndarray
    y_new: np.ndarray
    dw: np.ndarray
    fast: np.ndarray
    phi_sq: np.ndarray


class Observer:
    """Accumulator updated once per step.

    Subclasses implement :meth:`start`, :meth:`update` and :meth:`result`;
    results are dicts of arrays whose leading axis indexes paths.
    """

    name = "observer"

    def start(self, n_paths, grid, record_steps):
        self.record_steps = np.asarray(record_steps)

    def update(self, ctx):
        raise NotImplementedError

    def result(self):
        raise NotImplementedError


class QuadraticVariation(Observer):
    """Running sum of squared increments of the fast coordinate."""

    name = "qv"

    def start(self, n_paths, grid, record_steps):
        super().start(n_paths, grid, record_steps)
        self.qv = np.zeros(n_paths)

    def update(self, ctx):
        self.qv += (ctx.x_new - ctx.x) ** 2

    def result(self):
        return {self.name: self.qv}


class BandOccupation(Observer):
    """Fraction of time spent in ``|x| < h`` for several widths ``h``."""

    name = "occupation"

    def __init__(self, widths):
        self.widths = np.asarray(widths, dtype=float)

    def start(self, n_paths, grid, record_steps):
        super().start(n_paths, grid, record_steps)
        self.acc = np.zeros((n_paths, self.widths.size))
        self.total = grid.n_steps

    def update(self, ctx):
        self.acc += np.abs(ctx.x)[:, None] < self.widths[None, :]

    def result(self):
        return {self.name: self.acc / self.total}


class FastIntegral(Observer):
    """``eps^-1 int_0^t psi(x/eps) ds`` recorded at the record steps."""

    name = "fast_integral"

    def __init__(self, psi):
        self.psi = psi

    def start(self, n_paths, grid, record_steps):
        super().start(n_paths, grid, record_steps)
        self.acc = np.zeros(n_paths)
        self.out = np.zeros((n_paths, len(record_steps)))
        self._slot = {int(s): j for j, s in enumerate(record_steps)}

    def update(self, ctx):
        self.acc += self.psi(ctx.fast) * (ctx.dt / ctx.eps)
        j = self._slot.get(ctx.step + 1)
        if j is not None:
            self.out[:, j] = self.acc

    def result(self):
        return {self.name: self.out}


class CesaroDiscrepancy(Observer):
    """Running ``int f(t, x, y) (|phi|^2(x/eps, y) - a(x, y)) ds`` and its sup."""

    name = "cesaro"

    def __init__(self, weight, average):
        self.weight = weight
        self.average = average

    def start(self, n_paths, grid, record_steps):
        super().start(n_paths, grid, record_steps)
        self.acc = np.zeros(n_paths)
        self.sup = np.zeros(n_paths)

    def update(self, ctx):
        a = self.average.speed(ctx.x, ctx.y)
        self.acc += self.weight(ctx.t, ctx.x, ctx.y) * (ctx.phi_sq - a) * ctx.dt
        np.maximum(self.sup, np.abs(self.acc), out=self.sup)

    def result(self):
        return {self.name: self.sup}


def _run_block(coeffs, eps, regime, x0, y0, grid, seed, paths, record_steps, observers, keep_full,
               chunk=512):
    d, k = coeffs.d, coeffs.k
    n = len(paths)
    longtime = regime == "longtime"
    scale = eps ** -2 if longtime else 1.0 / eps
    x = np.full(n, eps * x0 if longtime else float(x0))
    y = np.tile(np.asarray(y0, dtype=float).reshape(1, d), (n, 1))
    noise = PathNoise(seed, paths, k, PRELIMIT, chunk=min(chunk, grid.n_steps))
    sqdt = np.sqrt(grid.dt)
    obs = copy.deepcopy(list(observers))
    for ob in obs:
        ob.start(n, grid, record_steps)
    slot = {int(s): j for j, s in enumerate(record_steps)}
    xr = np.zeros((n, len(record_steps)))
    yr = np.zeros((n, len(record_steps), d))
    if 0 in slot:
        xr[:, slot[0]] = x
        yr[:, slot[0]] = y
    if keep_full:
        xf = np.zeros(grid.n_steps + 1)
        yf = np.zeros((grid.n_steps + 1, d))
        dwf = np.zeros((grid.n_steps, k))
        xf[0], yf[0] = x[0], y[0]
    for step in range(grid.n_steps):
        dw = noise.next() * sqdt
        fast = x * scale
        ph = coeffs.phi(fast, y)
        sg = coeffs.sigma(fast, y)
        if longtime:
            drift = coeffs.b2(fast, y) * (grid.dt * scale)
            dy = drift + (sg * dw[:, None, :]).sum(axis=-1) / eps
        else:
            drift = (coeffs.b1(y) + coeffs.b2(fast, y)) * grid.dt
            dy = drift + (sg * dw[:, None, :]).sum(axis=-1)
        x_new = x + (ph * dw).sum(axis=-1)
        y_new = y + dy
        if obs:
            ctx = StepContext(step, grid.t0 + step * grid.dt, grid.dt, eps, x, y, x_new, y_new, dw,
                              fast, (ph * ph).sum(axis=-1))
            for ob in obs:
                ob.update(ctx)
        x, y = x_new, y_new
        j = slot.get(step + 1)
        if j is not None:
            xr[:, j] = x
            yr[:, j] = y
        if keep_full:
            xf[step + 1], yf[step + 1], dwf[step] = x[0], y[0], dw[0]
    out = {"x": xr, "y": yr}
    for ob in obs:
        out.update(ob.result())
    if keep_full:
        out.update(x_full=xf, y_full=yf, dw_full=dwf)
    return out


@dataclass
class PathBundle:
    """One fully recorded path with its driving increments."""

    grid: TimeGrid
    x: np.ndarray
    y: np.ndarray
    dw: np.ndarray
    eps: float
    seed: int
    regime: str = "standard"
    path_index: int = 0

    @property
    def times(self):
        return self.grid.times

    def save(self, path):
        d, k = self.y.shape[1], self.dw.shape[1]
        dwp = np.vstack([self.dw, np.zeros((1, k))])
        write = records.write_binary_path
        write(path, d=d, k=k, n_extra=0, regime=self.regime, n_steps=self.grid.n_steps,
              seed=self.seed, path_index=self.path_index, t0=self.grid.t0, dt=self.grid.dt,
              eps=self.eps, table=np.column_stack([self.x, self.y, dwp]))

    @classmethod
    def load(cls, path):
        h, table = records.read_binary_path(path)
        d, k = h["d"], h["k"]
        return cls(TimeGrid(h["t0"], h["dt"], h["n_steps"]), table[:, 0], table[:, 1:1 + d],
                   table[:-1, 1 + d:1 + d + k], h["eps"], h["seed"], h["regime"], h["path_index"])

    def export_csv(self, path, y_ref=None, exponent=None):
        cols = {"t": self.times, "x": self.x}
        for i in range(self.y.shape[1]):
            cols[f"y{i + 1}"] = self.y[:, i]
        if y_ref is not None:
            z = deviation(self, y_ref, exponent).zeta
            for i in range(z.shape[1]):
                cols[f"zeta{i + 1}"] = z[:, i]
        records.write_columns(path, cols)


@dataclass
class EnsembleResult:
    """Snapshots of an ensemble at the record times plus observer outputs."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    eps: float
    regime: str
    seed: int
    grid: TimeGrid
    record_steps: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.x.shape[0]


def _prepare(coeffs, eps, regime, grid, step_safety):
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if regime == "longtime" and not coeffs.b1_vanishes:
        raise ValueError("the long-time regime requires b1 == 0")
    check_step(grid, eps, regime, step_safety)


def simulate_full(coeffs, eps, x0, y0, grid, seed, regime="standard", path_index=0, step_safety=0.1):
    """Simulate one path and keep every step and increment."""
    _prepare(coeffs, eps, regime, grid, step_safety)
    out = _run_block(coeffs, eps, regime, x0, y0, grid, seed, np.array([path_index]),
                     np.array([0]), (), True)
    return PathBundle(grid, out["x_full"], out["y_full"], out["dw_full"], eps, seed, regime, path_index)


def simulate_longtime(coeffs, eps, x0, y0, grid, seed, path_index=0, step_safety=0.1):
    """Single long-time path started from ``(eps*x0, y0)``."""
    return simulate_full(coeffs, eps, x0, y0, grid, seed, "longtime", path_index, step_safety)


def simulate_ensemble(coeffs, eps, x0, y0, grid, n_paths, seed, regime="standard", record_times=None,
                      observers=(), workers=None, block_size=2500, step_safety=0.1):
    """Simulate ``n_paths`` paths, keeping snapshots and observer outputs only.

    Paths are split into fixed blocks of ``block_size``; blocks may run in
    worker processes and are reassembled in path order, so the output does
    not depend on ``workers``.  Record times snap to the nearest grid point;
    ``result.times`` holds the snapped values.
    """
    _prepare(coeffs, eps, regime, grid, step_safety)
    if record_times is None:
        record_times = [grid.t0, grid.horizon]
    steps = np.unique(grid.nearest_index(record_times))
    tasks = [(coeffs, eps, regime, x0, y0, grid, seed, b, steps, tuple(observers), False)
             for b in path_blocks(n_paths, block_size)]
    parts = ordered_map(_run_block, tasks, workers)
    merged = {key: np.concatenate([p[key] for p in parts], axis=0) for key in parts[0]}
    x, y = merged.pop("x"), merged.pop("y")
    return EnsembleResult(grid.times[steps], x, y, eps, regime, seed, grid, steps, merged)


def solve_unperturbed(coeffs, y0, grid, bound=1e8):
    """Classical RK4 solution of ``dy = b1(y) dt`` on the grid."""
    d = coeffs.d
    out = np.zeros((grid.n_steps + 1, d))
    y = np.asarray(y0, dtype=float).reshape(1, d)
    out[0] = y
    h = grid.dt
    f = coeffs.b1
    for j in range(grid.n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.abs(y).max() > bound:
            raise OverflowError(f"unperturbed solution blows up near t={grid.t0 + (j + 1) * h:.6g}")
        out[j + 1] = y
    return out


@dataclass
class DeviationPath:
    times: np.ndarray
    zeta: np.ndarray
    exponent: float


def deviation(bundle, y_ref, exponent):
    """Rescaled deviation ``eps^-exponent (y - y_ref)`` of a recorded path."""
    y_ref = np.asarray(y_ref, dtype=float)
    if y_ref.shape != bundle.y.shape:
        raise ValueError(f"reference shape {y_ref.shape} does not match path {bundle.y.shape}")
    return DeviationPath(bundle.times, (bundle.y - y_ref) * bundle.eps ** -exponent, exponent)


def ensemble_deviation(result, y_ref, exponent):
    """Deviation snapshots ``(n_paths, n_records, d)`` of an ensemble."""
    y_ref = np.asarray(y_ref, dtype=float)
    if y_ref.shape[0] != result.grid.n_steps + 1:
        raise ValueError("reference trajectory is not on the ensemble grid")
    return (result.y - y_ref[result.record_steps][None]) * result.eps ** -exponent
