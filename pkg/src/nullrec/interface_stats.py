"""Excursion statistics at the interface.

An excursion starts at ``|x| <= ell`` and ends when ``|x|`` first reaches
``delta``.  Along the way the slow increment is accumulated: the slow
coordinate itself in the long-time regime, the rescaled deviation in the
standard regime.  The increment is split into its stochastic-integral part
and the rest; the former has mean zero, so the drift estimate uses the
remainder as a control variate.
"""

from dataclasses import dataclass, field

import numpy as np

from . import records
from .coefficients import average_interface
from .sde import step_bound
from .streams import EXCURSION, PathNoise, ordered_map, path_blocks


class CensoringError(RuntimeError):
    """Raised when too many excursions hit the step cap."""


class ScheduleError(ValueError):
    """Raised when an (eps, ell, delta) schedule is not admissible."""


def exit_probability(x, delta):
    """Probability that Brownian motion from ``x`` leaves ``(-delta, delta)`` at ``+delta``."""
    return (np.asarray(x, dtype=float) + delta) / (2.0 * delta)


def interface_eigenfunction(a_plus, a_minus, lam):
    """Decaying solution of ``1/2 a u'' = lam u`` on each side, ``u(0) = 1``.

    Returns a callable ``u(x)`` equal to ``exp(-sqrt(2 lam / a_plus) x)`` for
    ``x >= 0`` and ``exp(sqrt(2 lam / a_minus) x)`` for ``x < 0``.
    """
    kp, km = np.sqrt(2.0 * lam / a_plus), np.sqrt(2.0 * lam / a_minus)
    return lambda x: np.where(np.asarray(x) >= 0, np.exp(-kp * np.asarray(x)), np.exp(km * np.asarray(x)))


def occupation_fraction(x, delta):
    """Fraction of grid steps (left points) with ``|x| < delta``; path axis last."""
    x = np.asarray(x)
    return np.mean(np.abs(x[:-1]) < delta, axis=0)


def deviation_exponent(coeffs):
    """``1/2`` when the slow noise is present, ``1`` otherwise."""
    return 1.0 if coeffs.sigma_vanishes else 0.5


def _excursion_block(coeffs, eps, regime, start_x, y, delta, dt, cap, seed, paths, exponent):
    d, k = coeffs.d, coeffs.k
    n = len(paths)
    longtime = regime == "longtime"
    scale = eps ** -2 if longtime else 1.0 / eps
    nscale = 1.0 / eps if longtime else eps ** -exponent
    x = np.full(n, float(start_x))
    y = np.asarray(y, dtype=float).reshape(1, d)
    Y = np.repeat(y, n, axis=0)
    yr = y.copy()
    M = np.zeros((n, d))
    dY = np.zeros((n, d))
    theta = np.zeros(n)
    side = np.zeros(n)
    active = np.ones(n, dtype=bool)
    noise = PathNoise(seed, paths, k, EXCURSION, chunk=256)
    sq = np.sqrt(dt)
    for step in range(cap):
        z = noise.next(active)
        idx = np.flatnonzero(active)
        dw = z[idx] * sq
        xa, Ya = x[idx], Y[idx]
        fast = xa * scale
        ph = coeffs.phi(fast, Ya)
        sg = coeffs.sigma(fast, Ya)
        mart = (sg * dw[:, None, :]).sum(axis=-1)
        if longtime:
            Y[idx] = Ya + coeffs.b2(fast, Ya) * (dt * scale) + mart / eps
        else:
            Y[idx] = Ya + (coeffs.b1(Ya) + coeffs.b2(fast, Ya)) * dt + mart
            f = coeffs.b1
            k1 = f(yr)
            k2 = f(yr + 0.5 * dt * k1)
            k3 = f(yr + 0.5 * dt * k2)
            yr = yr + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + f(yr + dt * k3))
        M[idx] += mart * nscale
        x[idx] = xa + (ph * dw).sum(axis=-1)
        out = np.abs(x[idx]) >= delta
        if np.any(out):
            e = idx[out]
            theta[e] = (step + 1) * dt
            side[e] = np.sign(x[e])
            dY[e] = (Y[e] - y) if longtime else (Y[e] - yr) * eps ** -exponent
            active[e] = False
            if not active.any():
                break
    c = np.flatnonzero(active)
    if c.size:
        dY[c] = (Y[c] - y) if longtime else (Y[c] - yr) * eps ** -exponent
    return {"side": side, "theta": theta, "dy": dY, "mart": M, "censored": active}


@dataclass
class ExcursionStats:
    """Aggregated exit statistics of one (eps, ell, delta, start) configuration."""

    eps: float
    delta: float
    ell: float
    start_x: float
    n_paths: int
    n_censored: int
    p_plus: float
    p_plus_se: float
    mean_dy_over_delta: np.ndarray
    mean_dy_over_delta_se: np.ndarray
    mean_dy_over_delta_raw: np.ndarray
    mean_dydy_over_delta: np.ndarray
    mean_dydy_over_delta_se: np.ndarray
    theta_mean: float
    theta_se: float
    third_moment_over_delta: float
    third_moment_over_delta_se: float
    dt: float


def excursion_exit_stats(coeffs, eps, start_x, y, delta, ell, n_paths, seed, regime="longtime", dt=None,
                         step_safety=0.1, exponent=None, cap_factor=50.0, max_censored=0.01,
                         workers=None, block_size=5000):
    """Simulate excursions from ``start_x`` until ``|x| >= delta``.

    Parameters
    ----------
    regime : {"longtime", "standard"}
        Long-time increments of the slow coordinate, or rescaled deviation
        increments with ``exponent`` (default chosen by :func:`deviation_exponent`).
    cap_factor : float
        Excursions are stopped after ``cap_factor * delta^2 / dt`` steps and
        counted as censored.
    """
    if not 0 <= ell < delta:
        raise ScheduleError(f"need 0 <= ell < delta, got ell={ell}, delta={delta}")
    if abs(start_x) > ell * (1 + 1e-12):
        raise ScheduleError(f"start {start_x} lies outside [-ell, ell] with ell={ell}")
    if regime == "longtime" and not coeffs.b1_vanishes:
        raise ValueError("the long-time regime requires b1 == 0")
    bound = step_bound(eps, regime, step_safety)
    dt = bound if dt is None else float(dt)
    if dt > bound * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} exceeds the stability bound {bound:.3g}")
    exponent = deviation_exponent(coeffs) if exponent is None else exponent
    cap = int(np.ceil(cap_factor * delta ** 2 / dt))
    tasks = [(coeffs, eps, regime, start_x, y, delta, dt, cap, seed, b, exponent)
             for b in path_blocks(n_paths, block_size)]
    parts = ordered_map(_excursion_block, tasks, workers)
    r = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
    cens = r["censored"]
    nc = int(cens.sum())
    if nc > max_censored * n_paths:
        raise CensoringError(f"{nc} of {n_paths} excursions exceeded {cap} steps")
    ok = ~cens
    n = int(ok.sum())
    side, theta, dy, mart = r["side"][ok], r["theta"][ok], r["dy"][ok], r["mart"][ok]
    up = (side > 0).astype(float)
    drift = dy - mart
    outer = dy[:, :, None] * dy[:, None, :]
    norm3 = np.linalg.norm(dy, axis=1) ** 3
    se = lambda v: v.std(axis=0, ddof=1) / np.sqrt(n)
    return ExcursionStats(
        eps, delta, ell, float(start_x), n_paths, nc, float(up.mean()), float(se(up)),
        drift.mean(axis=0) / delta, se(drift) / delta, dy.mean(axis=0) / delta,
        outer.mean(axis=0) / delta, se(outer) / delta, float(theta.mean()), float(se(theta)),
        float(norm3.mean() / delta), float(se(norm3) / delta), dt)


def default_schedule(eps_schedule, regime="longtime", gamma=0.2):
    """``(ell, delta)`` pairs: ``eps^(2-g), eps^(2-2g)`` (long-time) or ``eps^(1-g), eps^(1-2g)``."""
    if not 0 < gamma < 0.5:
        raise ScheduleError("gamma must lie in (0, 1/2)")
    base = 2.0 if regime == "longtime" else 1.0
    eps = np.asarray(eps_schedule, dtype=float)
    return eps ** (base - gamma), eps ** (base - 2 * gamma)


def check_schedule(eps, ell, delta):
    eps, ell, delta = map(np.asarray, (eps, ell, delta))
    if np.any(ell >= delta):
        raise ScheduleError("every ell must be smaller than its delta")
    order = np.argsort(-eps)
    ratio = (delta / ell)[order]
    if np.any(np.diff(ratio) <= 0):
        raise ScheduleError("delta/ell must increase as eps decreases")
    if np.any(np.diff(delta[order]) >= 0):
        raise ScheduleError("delta must shrink with eps")


@dataclass
class BoundaryTable:
    """Boundary-increment statistics across a schedule, with targets."""

    regime: str
    y: np.ndarray
    beta_target: np.ndarray
    alpha_target: np.ndarray
    rows: list = field(default_factory=list)

    def at_start(self, start=0.0):
        """Rows started at ``start`` in units of ``ell``."""
        return [r for r in self.rows if abs(r.start_x - start * r.ell) <= 1e-12 * max(1.0, r.ell)]

    def monotone(self, start=0.0, floors=2.0):
        """Whether the drift error is non-increasing along the schedule within noise."""
        rows = sorted(self.at_start(start), key=lambda r: -r.eps)
        err = [np.max(np.abs(r.mean_dy_over_delta - self.beta_target)) for r in rows]
        se = [np.max(r.mean_dy_over_delta_se) for r in rows]
        return all(err[i + 1] <= err[i] + floors * max(se[i], se[i + 1]) for i in range(len(err) - 1))

    def to_csv(self, path):
        d = self.beta_target.shape[0]
        head = ["eps", "delta", "ell", "start_x", "n_paths", "n_censored", "p_plus", "p_plus_se",
                "theta_mean", "theta_se", "third_moment_over_delta"]
        head += [f"drift{i + 1}" for i in range(d)] + [f"drift{i + 1}_se" for i in range(d)]
        head += [f"drift{i + 1}_raw" for i in range(d)]
        head += [f"second{i + 1}{j + 1}" for i in range(d) for j in range(d)]
        head += [f"second{i + 1}{j + 1}_se" for i in range(d) for j in range(d)]
        head += [f"beta{i + 1}" for i in range(d)] + [f"alpha{i + 1}{j + 1}" for i in range(d) for j in range(d)]
        rows = []
        for r in self.rows:
            rows.append([r.eps, r.delta, r.ell, r.start_x, r.n_paths, r.n_censored, r.p_plus, r.p_plus_se,
                         r.theta_mean, r.theta_se, r.third_moment_over_delta,
                         *r.mean_dy_over_delta, *r.mean_dy_over_delta_se, *r.mean_dy_over_delta_raw,
                         *r.mean_dydy_over_delta.ravel(), *r.mean_dydy_over_delta_se.ravel(),
                         *self.beta_target, *self.alpha_target.ravel()])
        records.write_csv(path, head, rows)


def interface_targets(coeffs, y, regime, avg=None):
    """Targets for the drift and second-moment ratios.

    Long-time: ``(beta(y), alpha(y))``.  Standard: the deviation limit sees
    ``beta`` only when the slow noise vanishes and ``alpha`` otherwise.
    """
    avg = avg or average_interface(coeffs)
    beta = avg.beta(np.asarray(y, float))[0]
    alpha = avg.alpha(np.asarray(y, float))[0]
    if regime == "standard":
        if coeffs.sigma_vanishes:
            alpha = np.zeros_like(alpha)
        else:
            beta = np.zeros_like(beta)
    return beta, alpha


def boundary_increment_limits(coeffs, y, eps_schedule, n_paths, seed, regime="longtime", gamma=0.2,
                              starts=(0.0,), ell=None, delta=None, avg=None, workers=None, step_safety=0.1,
                              cap_factor=50.0, max_censored=0.01):
    """Excursion statistics along a shrinking ``(eps, ell, delta)`` schedule.

    ``starts`` lists starting points in units of ``ell`` (``0``, ``1`` and
    ``-1`` are typical).
    """
    eps = np.asarray(eps_schedule, dtype=float)
    dl, dd = default_schedule(eps, regime, gamma)
    ell = dl if ell is None else np.asarray(ell, dtype=float)
    delta = dd if delta is None else np.asarray(delta, dtype=float)
    check_schedule(eps, ell, delta)
    beta, alpha = interface_targets(coeffs, y, regime, avg)
    table = BoundaryTable(regime, np.asarray(y, float), beta, alpha)
    for i, (e, l, dlt) in enumerate(zip(eps, ell, delta)):
        for j, s in enumerate(starts):
            st = excursion_exit_stats(coeffs, float(e), float(s) * l, y, float(dlt), float(l), n_paths,
                                      seed + 1000 * i + j, regime, step_safety=step_safety,
                                      cap_factor=cap_factor, max_censored=max_censored, workers=workers)
            table.rows.append(st)
    return table
