"""Construction of the limit processes.

The fast limit is a Brownian motion run at speed ``a_plus`` on the positive
half-line and ``a_minus`` on the negative one.  It is built by a time change:
a standard Brownian path on an auxiliary clock ``s`` is turned into a path
on the physical clock through ``t(s) = int 1/a(xhat, y) ds`` and read off at
the first auxiliary point reaching each output time.

The slow limits are driven by the local time ``L`` of the fast limit and by
``V = W0(L)``, a Brownian motion evaluated at the local-time clock, with
increments ``sqrt(dL) * xi``.  All batch routines carry a trailing path axis.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .coefficients import matrix_sqrt_psd
from .local_time import default_band, local_time_band
from .sde import solve_unperturbed
from .streams import DIRECT_EM, LIMIT_CLOCK, LIMIT_NOISE, ordered_map, path_blocks, path_normals


class InversionError(RuntimeError):
    """Raised when the auxiliary clock does not cover the output horizon."""


def invert_clock(t_of_s, grid_t):
    """First auxiliary index whose physical time reaches each output time.

    Sampling at these indices evaluates the auxiliary path at stopping
    times, so martingale properties survive the time change; the physical
    time error is below one auxiliary step.

    Parameters
    ----------
    t_of_s : ndarray, shape (m, n_s+1)
        Non-decreasing physical time along the auxiliary grid, one row per
        path.
    grid_t : ndarray, shape (n_t+1,)

    Returns
    -------
    k : ndarray of int, shape (m, n_t+1)
    """
    m, n1 = t_of_s.shape
    tol = 1e-12 * max(1.0, float(grid_t[-1]))
    if np.any(t_of_s[:, -1] < grid_t[-1] - tol):
        raise InversionError("auxiliary clock ends before the output horizon")
    span = float(max(t_of_s[:, -1].max(), grid_t[-1])) + 1.0
    off = span * np.arange(m)[:, None]
    idx = np.searchsorted((t_of_s + off).ravel(), (grid_t[None, :] - tol + off).ravel(), side="left")
    return np.clip(idx.reshape(m, -1) - n1 * np.arange(m)[:, None], 0, n1 - 1)


def sample_on_clock(values, k):
    """Pick path-major ``values`` ``(m, n_s+1, ...)`` at indices ``k``; time-major result."""
    rows = np.arange(k.shape[0])[:, None]
    return np.swapaxes(values[rows, k], 0, 1).copy()


def _aux_grid(avg, grid, speeds=None):
    lo, hi = speeds if speeds is not None else avg.speed_bounds()
    ds = lo * grid.dt
    n_s = int(np.ceil(hi * grid.horizon / ds * (1 + 1e-9))) + 2
    return ds, n_s


def _brownian_rows(seed, paths, n_s, ds, x0, substream):
    xi = path_normals(seed, paths, n_s, 1, substream, path_major=True)[..., 0]
    out = np.empty((len(paths), n_s + 1))
    out[:, 0] = x0
    np.cumsum(np.sqrt(ds) * xi, axis=1, out=out[:, 1:])
    out[:, 1:] += x0
    return out


def _clock(avg, xhat, ds, grid, y_ref):
    """Physical time along the auxiliary grid for path-major ``xhat``."""
    m = xhat.shape[0]
    t = np.zeros(xhat.shape)
    if avg.y_independent:
        ap, am, _, _ = avg.constants()
        np.cumsum(np.where(xhat[:, :-1] >= 0.0, ds / ap, ds / am), axis=1, out=t[:, 1:])
        return t
    n_t = grid.n_steps
    for i in range(xhat.shape[1] - 1):
        j = np.minimum((t[:, i] / grid.dt).astype(np.int64), n_t)
        t[:, i + 1] = t[:, i] + ds / avg.speed(xhat[:, i], y_ref[j])
    return t


def build_X0(avg, y_ref, grid, seed, paths=(0,), x0=0.0, band_factor=2.0):
    """Fast limit on ``grid`` with its band local time.

    Returns
    -------
    x : ndarray, shape (n_t+1, m)
    L : LocalTimeProfile
        Band estimator on the output path with width ``band_factor*sqrt(dt)``.
    """
    paths = np.atleast_1d(paths)
    ds, n_s = _aux_grid(avg, grid)
    xhat = _brownian_rows(seed, paths, n_s, ds, float(x0), LIMIT_CLOCK)
    t = _clock(avg, xhat, ds, grid, y_ref)
    k = invert_clock(t, grid.times - grid.t0)
    x = sample_on_clock(xhat, k)
    L = local_time_band(x, np.diff(x, axis=0) ** 2, default_band(grid.dt, band_factor), grid.dt)
    return x, L


def direct_em_X0(avg, y_ref, grid, seed, paths=(0,), x0=0.0):
    """Euler scheme ``dx = sqrt(a(x, y)) dW`` used as a cross-check of the time change."""
    paths = np.atleast_1d(paths)
    xi = path_normals(seed, paths, grid.n_steps, 1, DIRECT_EM)[..., 0]
    x = np.zeros((grid.n_steps + 1, len(paths)))
    x[0] = x0
    sq = np.sqrt(grid.dt)
    for j in range(grid.n_steps):
        yj = np.broadcast_to(y_ref[j], (len(paths), avg.d))
        x[j + 1] = x[j] + np.sqrt(avg.speed(x[j], yj)) * sq * xi[j]
    return x


def build_V(L, d, seed, paths=(0,)):
    """``V = W0(L)`` with increments ``sqrt(dL) * xi``; shape ``(n_t+1, m, d)``."""
    L = np.asarray(L)
    paths = np.atleast_1d(paths)
    dL = np.diff(L, axis=0)
    if np.any(dL < 0):
        raise ValueError("local time must be non-decreasing")
    xi = path_normals(seed, paths, dL.shape[0], d, LIMIT_NOISE)
    dV = np.sqrt(dL)[..., None] * xi
    return np.concatenate([np.zeros((1,) + dV.shape[1:]), np.cumsum(dV, axis=0)])


def _along(values_fn, y_ref, constant):
    """Evaluate a field along the reference trajectory, collapsing constants."""
    if constant:
        return [values_fn(y_ref[:1])[0]] * (y_ref.shape[0])
    return list(values_fn(y_ref))


def propagators(jac, y_ref, dt):
    """``expm(J(y_j) dt)`` along the reference trajectory."""
    J = jac(y_ref)
    if np.all(J == J[:1]):
        P = expm(J[0] * dt)
        return np.broadcast_to(P, J.shape)
    return np.stack([expm(Jj * dt) for Jj in J])


def evolve_zeta_diffusive(jac, y_ref, alpha_fn, V, grid, jitter=1e-10):
    """Diffusive deviation limit by the exact one-step propagator.

    ``zeta_{j+1} = expm(J_j dt) (zeta_j + sqrt(alpha_j) dV_j)`` where the
    matrices are evaluated at the reference trajectory.
    """
    P = propagators(jac, y_ref[:-1], grid.dt)
    A = alpha_fn(y_ref[:-1])
    if np.all(A == A[:1]):
        S = np.broadcast_to(matrix_sqrt_psd(A[0], jitter), A.shape)
    else:
        S = np.stack([matrix_sqrt_psd(a, jitter) for a in A])
    dV = np.diff(V, axis=0)
    z = np.zeros(V.shape)
    for j in range(grid.n_steps):
        z[j + 1] = (z[j] + dV[j] @ S[j].T) @ P[j].T
    return z


def evolve_zeta_drift(jac, y_ref, beta_fn, L, grid):
    """Drift deviation limit ``zeta_{j+1} = expm(J_j dt) (zeta_j + beta_j dL_j)``."""
    P = propagators(jac, y_ref[:-1], grid.dt)
    B = beta_fn(y_ref[:-1])
    dL = np.diff(L, axis=0)
    d = B.shape[1]
    z = np.zeros(dL.shape[:1] + (L.shape[1], d))
    z = np.concatenate([np.zeros((1, L.shape[1], d)), z])
    for j in range(grid.n_steps):
        z[j + 1] = (z[j] + dL[j][:, None] * B[j][None, :]) @ P[j].T
    return z


def build_longtime_limit(avg, y0, grid, seed, paths=(0,), band_factor=2.0):
    """Long-time limit of the fast and slow coordinates.

    Three stages: a Brownian path ``w1`` and its band local time on an
    auxiliary clock; the slow path ``yhat = Y0(L)`` driven by ``beta dL`` and
    ``sqrt(alpha) dV``; the time change ``t(s) = int 1/a(w1, yhat) ds``.

    Returns
    -------
    dict with ``x`` (n_t+1, m), ``y`` (n_t+1, m, d), ``L`` (n_t+1, m),
    ``V`` (n_t+1, m, d) and ``touched`` (n_t, m): whether the auxiliary path
    met the band during each output step.
    """
    paths = np.atleast_1d(paths)
    m, d = len(paths), avg.d
    ds, n_s = _aux_grid(avg, grid)
    h = default_band(ds, band_factor)
    w1 = _brownian_rows(seed, paths, n_s, ds, 0.0, LIMIT_CLOCK)
    inside = np.abs(w1[:, :-1]) < h
    dL = inside * np.diff(w1, axis=1) ** 2 / (2.0 * h)
    dV = np.sqrt(dL)[..., None] * path_normals(seed, paths, n_s, d, LIMIT_NOISE, path_major=True)
    y0 = np.asarray(y0, dtype=float).reshape(d)
    yhat = np.empty((m, n_s + 1, d))
    yhat[:, 0] = y0
    if avg.y_independent:
        ap, am, beta, alpha = avg.constants()
        S = matrix_sqrt_psd(alpha)
        np.cumsum(dL[..., None] * beta + dV @ S.T, axis=1, out=yhat[:, 1:])
        yhat[:, 1:] += y0
        t = np.zeros((m, n_s + 1))
        np.cumsum(np.where(w1[:, :-1] >= 0.0, ds / ap, ds / am), axis=1, out=t[:, 1:])
    else:
        t = np.zeros((m, n_s + 1))
        for i in range(n_s):
            yi = yhat[:, i]
            yhat[:, i + 1] = yi
            act = np.flatnonzero(dL[:, i] > 0)
            if act.size:
                ya = yi[act]
                S = np.stack([matrix_sqrt_psd(a) for a in avg.alpha(ya)])
                yhat[act, i + 1] = (ya + dL[act, i, None] * avg.beta(ya)
                                    + np.einsum("nij,nj->ni", S, dV[act, i]))
            t[:, i + 1] = t[:, i] + ds / avg.speed(w1[:, i], yi)
    V = np.zeros((m, n_s + 1, d))
    np.cumsum(dV, axis=1, out=V[:, 1:])
    L = np.zeros((m, n_s + 1))
    np.cumsum(dL, axis=1, out=L[:, 1:])
    k = invert_clock(t, grid.times - grid.t0)
    hits = np.zeros((m, n_s + 1), dtype=np.int64)
    np.cumsum(inside, axis=1, out=hits[:, 1:])
    rows = np.arange(m)[:, None]
    touched = (hits[rows, k[:, 1:]] - hits[rows, k[:, :-1]]) > 0
    return {"x": sample_on_clock(w1, k), "y": sample_on_clock(yhat, k),
            "L": sample_on_clock(L, k), "V": sample_on_clock(V, k),
            "touched": touched.T.copy(), "band": h}


@dataclass
class LimitBlock:
    """Full limit paths of one block, handed to functionals."""

    kind: str
    times: np.ndarray
    x: np.ndarray
    w: np.ndarray
    L: np.ndarray
    V: np.ndarray
    y_ref: np.ndarray
    avg: object
    jac: object
    dt: float
    band: float
    extras: dict = field(default_factory=dict)


@dataclass
class LimitEnsemble:
    """Snapshots of limit paths plus functional outputs.

    ``w`` holds the slow limit: the deviation for the deviation kinds and
    the slow coordinate itself for the long-time kind.
    """

    kind: str
    times: np.ndarray
    x: np.ndarray
    w: np.ndarray
    L: np.ndarray
    seed: int
    extras: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.x.shape[0]


KINDS = ("diffusive", "drift", "longtime")


def limit_block(kind, coeffs, avg, y_ref, grid, seed, paths, steps, functionals=(), band_factor=2.0,
                x0=0.0):
    """Build one block of limit paths and reduce it to snapshots and functionals."""
    d = avg.d
    if kind == "longtime":
        out = build_longtime_limit(avg, y_ref[0], grid, seed, paths, band_factor)
        x, w, L, V = out["x"], out["y"], out["L"], out["V"]
        dy = np.any(np.diff(w, axis=0) != 0, axis=-1)
        extras = {"cantor_violations": np.sum(dy & ~out["touched"], axis=0),
                  "cantor_steps": np.full(len(paths), grid.n_steps)}
        band = default_band(grid.dt, band_factor)
    else:
        x, Lp = build_X0(avg, y_ref, grid, seed, paths, x0, band_factor)
        L, band = Lp.L, Lp.band
        V = build_V(L, d, seed, paths)
        if kind == "diffusive":
            w = evolve_zeta_diffusive(coeffs.b1_jac, y_ref, avg.alpha, V, grid)
        else:
            w = evolve_zeta_drift(coeffs.b1_jac, y_ref, avg.beta, L, grid)
        extras = {}
    blk = LimitBlock(kind, grid.times, x, w, L, V, y_ref, avg, coeffs.b1_jac, grid.dt, band)
    res = {"x": x[steps].T, "w": np.transpose(w[steps], (1, 0, 2)), "L": L[steps].T}
    res.update(extras)
    for fn in functionals:
        res.update(fn(blk))
    return res


def limit_ensemble(kind, coeffs, avg, y0, grid, n_paths, seed, record_times=None, functionals=(),
                   workers=None, block_size=256, band_factor=2.0, x0=0.0):
    """Ensemble of limit paths reduced to snapshots and functional outputs.

    Parameters
    ----------
    kind : {"diffusive", "drift", "longtime"}
    coeffs : CoefficientSet
        Supplies the Jacobian of the slow drift along the reference path.
    avg : AveragedInterfaceData
    functionals : sequence of callables
        Each maps a :class:`LimitBlock` to a dict of arrays with a leading
        path axis.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if kind == "longtime":
        y_ref = np.broadcast_to(np.asarray(y0, dtype=float), (grid.n_steps + 1, avg.d)).copy()
    else:
        y_ref = solve_unperturbed(coeffs, y0, grid)
    if record_times is None:
        record_times = [grid.t0, grid.horizon]
    steps = np.unique(grid.nearest_index(record_times))
    tasks = [(kind, coeffs, avg, y_ref, grid, seed, b, steps, tuple(functionals), band_factor, x0)
             for b in path_blocks(n_paths, block_size)]
    parts = ordered_map(limit_block, tasks, workers)
    merged = {key: np.concatenate([p[key] for p in parts], axis=0) for key in parts[0]}
    return LimitEnsemble(kind, grid.times[steps], merged.pop("x"), merged.pop("w"), merged.pop("L"),
                         seed, merged)


@dataclass
class LimitPath:
    """A single limit path with its local time and noise clock."""

    times: np.ndarray
    x: np.ndarray
    w: np.ndarray
    L: np.ndarray
    V: np.ndarray
    kind: str
    seed: int
    path_index: int


def limit_path(kind, coeffs, avg, y0, grid, seed, path_index=0, band_factor=2.0):
    """One full limit path, for plotting and export."""
    captured = {}

    def grab(blk):
        captured["blk"] = blk
        return {}

    limit_block(kind, coeffs, avg,
                np.broadcast_to(np.asarray(y0, float), (grid.n_steps + 1, avg.d)).copy()
                if kind == "longtime" else solve_unperturbed(coeffs, y0, grid),
                grid, seed, np.array([path_index]), np.array([0]), (grab,), band_factor)
    b = captured["blk"]
    return LimitPath(b.times, b.x[:, 0], b.w[:, 0], b.L[:, 0], b.V[:, 0], kind, seed, path_index)
