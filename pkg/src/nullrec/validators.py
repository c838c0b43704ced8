"""Statistical checks that turn simulation output into pass/fail rows.

Every check returns a :class:`StatReport` (or a table of them).  A check
that cannot be evaluated reports ``inconclusive`` instead of passing.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .sde import CesaroDiscrepancy, FastIntegral, ensemble_deviation, grid_for, simulate_ensemble, \
    solve_unperturbed

VERDICTS = ("pass", "fail", "inconclusive")


@dataclass
class StatReport:
    """One validator outcome."""

    experiment: str
    metric: str
    value: float
    target: float
    stderr: float
    threshold: float
    verdict: str
    n_samples: int = 0
    wall_time: float = 0.0
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")

    @property
    def passed(self):
        return self.verdict == "pass"

    def as_dict(self):
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def failed_report(experiment, metric, exc):
    """Row recording a validator that raised."""
    return StatReport(experiment, metric, float("nan"), float("nan"), float("nan"), float("nan"),
                      "fail", details={"error": f"{type(exc).__name__}: {exc}"})


def judge_abs(value, target, threshold, stderr=0.0):
    """Pass when ``|value - target| <= threshold``; inconclusive when noise dominates."""
    if not np.isfinite(value):
        return "inconclusive"
    if np.isfinite(stderr) and stderr > threshold / 2 and threshold > 0:
        return "inconclusive"
    return "pass" if abs(value - target) <= threshold else "fail"


# distribution comparisons

def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def noise_floor(n1, n2, c=1.36):
    """Critical KS distance ``c sqrt((n1+n2)/(n1 n2))`` (5% level for c = 1.36)."""
    return c * np.sqrt((n1 + n2) / (n1 * n2))


@dataclass
class ConvergenceRow:
    time: float
    projection: str
    eps: float
    ks: float
    p_value: float
    noise_floor: float


def projections(x, w, names=None):
    """Named scalar projections of fast and slow samples.

    ``x`` has shape ``(n,)`` and ``w`` shape ``(n, m)``; the projections are
    ``x``, each slow coordinate and the Euclidean norm of the slow vector
    (when ``m > 1``).
    """
    w = np.asarray(w).reshape(len(x), -1)
    names = names or [f"w{i + 1}" for i in range(w.shape[1])]
    out = {"x": np.asarray(x)}
    for i, nm in enumerate(names):
        out[nm] = w[:, i]
    if w.shape[1] > 1:
        out["norm"] = np.linalg.norm(w, axis=1)
    return out


def compare_marginals(prelimit, limit, times):
    """KS distances between prelimit and limit marginals.

    Parameters
    ----------
    prelimit : dict
        ``eps -> {time -> {projection -> samples}}``.
    limit : dict
        ``time -> {projection -> samples}``.

    Returns
    -------
    list of ConvergenceRow, ordered by time, projection and decreasing eps.
    """
    rows = []
    for t in times:
        for proj in limit[t]:
            b = limit[t][proj]
            for eps in sorted(prelimit, reverse=True):
                a = prelimit[eps][t][proj]
                ks, p = ks_distance(a, b)
                rows.append(ConvergenceRow(float(t), proj, float(eps), ks, p,
                                           float(noise_floor(a.size, b.size))))
    return rows


def convergence_verdicts(rows, final_threshold, floors=2.0, experiment="convergence"):
    """One report per (time, projection): non-increasing KS and final bound."""
    out = []
    keys = sorted({(r.time, r.projection) for r in rows})
    for t, proj in keys:
        seq = sorted((r for r in rows if r.time == t and r.projection == proj), key=lambda r: -r.eps)
        ks = np.array([r.ks for r in seq])
        nf = seq[-1].noise_floor
        monotone = bool(np.all(np.diff(ks) <= floors * nf))
        final = ks[-1]
        ok = monotone and final <= final_threshold
        out.append(StatReport(experiment, f"ks[{proj}](t={t:g})", float(final), 0.0, float(nf),
                              float(final_threshold), "pass" if ok else "fail", n_samples=len(seq),
                              details={"eps": [r.eps for r in seq], "ks": ks.tolist(),
                                       "monotone_within_floors": monotone}))
    return out


# martingale problem

class MartingaleFunctional:
    """Per-path increments ``f(Z_t) - f(Z_s) - int_s^t Lf(Z_r) dr`` on limit blocks.

    The generator is ``1/2 a(x, y) f_xx + (J w) . grad_w f`` for the
    deviation limits and ``1/2 a(x, w) f_xx`` for the long-time limit.  With
    ``exclude_band`` the generator integrand is dropped while ``|x|`` lies
    inside the local-time band.
    """

    name = "martingale"

    def __init__(self, functions, s, t, exclude_band=True):
        self.functions = list(functions)
        self.s, self.t = float(s), float(t)
        self.exclude_band = exclude_band

    def __call__(self, blk):
        dt = blk.dt
        i0 = int(round((self.s - blk.times[0]) / dt))
        i1 = int(round((self.t - blk.times[0]) / dt))
        x = blk.x[i0:i1]
        w = blk.w[i0:i1]
        nj, B = x.shape
        if blk.kind == "longtime":
            a = blk.avg.speed(x.ravel(), w.reshape(-1, w.shape[-1])).reshape(nj, B)
            Jw = None
        else:
            yr = blk.y_ref[i0:i1]
            ap, am = blk.avg.a_plus(yr), blk.avg.a_minus(yr)
            a = np.where(x >= 0.0, ap[:, None], am[:, None])
            J = blk.jac(yr)
            Jw = np.einsum("jab,jnb->jna", J, w)
        mask = (np.abs(x) >= blk.band) if self.exclude_band else np.ones_like(x, dtype=bool)
        out = {"mart_xs": blk.x[i0]}
        for f in self.functions:
            if Jw is not None and np.any(Jw != 0):
                fxx, grad = f.generator_terms(x, w)
                gen = 0.5 * a * fxx + np.einsum("jna,jna->jn", Jw, grad)
            else:
                gen = 0.5 * a * f.dxx(x, w)
            integral = np.sum(gen * mask, axis=0) * dt
            out[f"mart_{f.label}"] = f.value(blk.x[i1], blk.w[i1]) - f.value(blk.x[i0], blk.w[i0]) - integral
        return out


def martingale_residual(x_s, increments, experiment="martingale", metric="residual", z=3.0,
                        expect_nonzero=False, z_nonzero=5.0, min_bin=30):
    """Binned means of martingale increments against their standard errors.

    Paths are binned by the sign of ``x_s`` and by ``|x_s|`` above or below
    its median within each sign.  The report carries the bin with the
    largest ``|mean| / stderr``.  For ``expect_nonzero`` the verdict is pass
    when the pooled mean exceeds ``z_nonzero`` standard errors.
    """
    x_s = np.asarray(x_s, dtype=float)
    inc = np.asarray(increments, dtype=float)
    bins = []
    for sgn in (1.0, -1.0):
        sel = np.flatnonzero(np.where(sgn > 0, x_s >= 0, x_s < 0))
        if sel.size == 0:
            continue
        med = np.median(np.abs(x_s[sel]))
        for part in (np.abs(x_s[sel]) <= med, np.abs(x_s[sel]) > med):
            idx = sel[part]
            if idx.size >= min_bin:
                bins.append(idx)
    if not bins:
        return StatReport(experiment, metric, float("nan"), 0.0, float("nan"), z, "inconclusive",
                          n_samples=inc.size)
    means = np.array([inc[b].mean() for b in bins])
    ses = np.array([inc[b].std(ddof=1) / np.sqrt(b.size) for b in bins])
    pooled, pooled_se = inc.mean(), inc.std(ddof=1) / np.sqrt(inc.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = np.where(ses > 0, np.abs(means) / ses, np.where(means == 0, 0.0, np.inf))
    j = int(np.argmax(zs))
    details = {"bin_means": means.tolist(), "bin_stderr": ses.tolist(), "bin_sizes": [b.size for b in bins],
               "pooled_mean": float(pooled), "pooled_stderr": float(pooled_se)}
    if expect_nonzero:
        zp = abs(pooled) / pooled_se if pooled_se > 0 else np.inf
        details["pooled_z"] = float(zp)
        return StatReport(experiment, metric, float(pooled), 0.0, float(pooled_se), z_nonzero,
                          "pass" if zp > z_nonzero else "fail", n_samples=inc.size, details=details)
    details["max_z"] = float(zs[j])
    return StatReport(experiment, metric, float(means[j]), 0.0, float(ses[j]), float(z * ses[j]),
                      "pass" if zs[j] <= z else "fail", n_samples=inc.size, details=details)


# moment and trend checks

def fit_loglog(x, y):
    """Least-squares slope and intercept of ``log y`` against ``log x``."""
    res = stats.linregress(np.log(x), np.log(y))
    return float(res.slope), float(res.intercept)


def check_tightness_moments(samples, times, p=8, min_exponent=1.5, experiment="tightness", base=None):
    """Fit ``E|z(t) - z(s)|^p ~ C (t - s)^kappa`` over lags from a base time.

    Parameters
    ----------
    samples : ndarray, shape (n, n_times, d)
        Deviation snapshots at ``times``.
    base : float, optional
        Start time ``s`` of every pair; defaults to ``times[0]``.
    """
    samples = np.asarray(samples, dtype=float)
    times = np.asarray(times, dtype=float)
    s = times[0] if base is None else base
    i0 = int(np.argmin(np.abs(times - s)))
    lags, moments = [], []
    for i in range(i0 + 1, len(times)):
        inc = np.linalg.norm(samples[:, i] - samples[:, i0], axis=-1)
        lags.append(times[i] - times[i0])
        moments.append(np.mean(inc ** p))
    if len(lags) < 4:
        raise ValueError("tightness fit needs at least four lags")
    moments = np.array(moments)
    if np.all(moments == 0):
        return StatReport(experiment, f"moment_exponent(p={p})", float("inf"), min_exponent, 0.0,
                          min_exponent, "pass", n_samples=samples.shape[0],
                          details={"lags": lags, "moments": moments.tolist(), "note": "constant paths"})
    kappa, logc = fit_loglog(np.array(lags), moments)
    return StatReport(experiment, f"moment_exponent(p={p})", kappa, min_exponent, float("nan"),
                      min_exponent, "pass" if kappa >= min_exponent else "fail",
                      n_samples=samples.shape[0],
                      details={"lags": lags, "moments": moments.tolist(), "log_constant": logc})


class IndicatorPsi:
    """Indicator of ``[lo, hi]`` as an integrable function of the fast variable."""

    def __init__(self, lo=-1.0, hi=1.0):
        self.lo, self.hi = float(lo), float(hi)

    def __call__(self, u):
        return ((u >= self.lo) & (u <= self.hi)).astype(float)

    @property
    def l1(self):
        return self.hi - self.lo


class GaussianPsi:
    """``exp(-u^2)`` as an integrable function of the fast variable."""

    def __call__(self, u):
        return np.exp(-u ** 2)

    @property
    def l1(self):
        return float(np.sqrt(np.pi))


def check_integral_functional_bound(coeffs, psi, eps_list, horizon, n_paths, seed, p=2,
                                    times=None, step_safety=0.1, slope_tol=0.3, workers=None,
                                    experiment="integral_functional", block_size=2500):
    """Ratios ``E|eps^-1 int psi(x/eps)|^p / (|psi|_1^p T^(p/2))`` across ``eps``.

    The trend in ``eps`` is the Theil-Sen slope of the ratio against
    ``log eps``; the check passes when it lies within ``slope_tol`` of zero.
    The time scaling is the log-log slope of the moment against ``t``.
    """
    times = np.asarray(times if times is not None else [horizon / 4, horizon / 2, horizon], float)
    y0 = np.zeros(coeffs.d)
    t0 = time.perf_counter()
    ratios, t_slopes, moments = [], [], []
    for i, eps in enumerate(eps_list):
        grid = grid_for(eps, horizon, "standard", step_safety)
        res = simulate_ensemble(coeffs, eps, 0.0, y0, grid, n_paths, seed + i, record_times=times,
                                observers=[FastIntegral(psi)], workers=workers, step_safety=step_safety,
                                block_size=block_size)
        I = np.abs(res.extras["fast_integral"])
        mom = np.mean(I ** p, axis=0)
        moments.append(mom.tolist())
        ratios.append(mom[-1] / (psi.l1 ** p * res.times[-1] ** (p / 2)))
        t_slopes.append(fit_loglog(res.times, mom)[0])
    slope = float(stats.theilslopes(ratios, np.log(eps_list))[0])
    return StatReport(experiment, "ratio_trend_in_log_eps", slope, 0.0, float("nan"), slope_tol,
                      "pass" if abs(slope) <= slope_tol else "fail", n_samples=n_paths,
                      wall_time=time.perf_counter() - t0,
                      details={"eps": list(eps_list), "ratios": ratios, "time_slopes": t_slopes,
                               "moments": moments, "times": times.tolist(), "p": p})


class UnitWeight:
    def __call__(self, t, x, y):
        return np.ones_like(x)


class CutoffWeight:
    """Bounded weight ``x kappa(|x|)`` with a smooth cutoff."""

    def __call__(self, t, x, y):
        from .gluing import factor_derivs
        return factor_derivs(x, 1, order=0)[0]


def check_cesaro_averaging(coeffs, avg, weight, eps_list, horizon, n_paths, seed, threshold=0.1,
                           step_safety=0.1, workers=None, experiment="cesaro_averaging", floors=2.0):
    """``E sup_t |int f (|phi|^2 - a) ds|`` should shrink with ``eps``."""
    y0 = np.zeros(coeffs.d)
    t0 = time.perf_counter()
    means, ses = [], []
    for i, eps in enumerate(eps_list):
        grid = grid_for(eps, horizon, "standard", step_safety)
        res = simulate_ensemble(coeffs, eps, 0.0, y0, grid, n_paths, seed + i,
                                observers=[CesaroDiscrepancy(weight, avg)], workers=workers,
                                step_safety=step_safety)
        s = res.extras["cesaro"]
        means.append(float(s.mean()))
        ses.append(float(s.std(ddof=1) / np.sqrt(s.size)))
    dec = all(means[i + 1] <= means[i] + floors * max(ses[i], ses[i + 1]) for i in range(len(means) - 1))
    ok = dec and means[-1] <= threshold
    return StatReport(experiment, "mean_sup_discrepancy", means[-1], 0.0, ses[-1], threshold,
                      "pass" if ok else "fail", n_samples=n_paths, wall_time=time.perf_counter() - t0,
                      details={"eps": list(eps_list), "means": means, "stderr": ses, "decreasing": dec})


def check_deviation_scaling(coeffs, eps_list, y0, horizon, n_paths, seed, target=1.0, tol=0.2,
                            step_safety=0.1, workers=None, experiment="deviation_scaling"):
    """Log-log slope of ``E|Y(T) - y(T)|^2`` against ``eps``."""
    t0 = time.perf_counter()
    msd = []
    for i, eps in enumerate(eps_list):
        grid = grid_for(eps, horizon, "standard", step_safety)
        y_ref = solve_unperturbed(coeffs, y0, grid)
        res = simulate_ensemble(coeffs, eps, 0.0, y0, grid, n_paths, seed + i, workers=workers,
                                step_safety=step_safety)
        dev = ensemble_deviation(res, y_ref, 0.0)[:, -1]
        msd.append(float(np.mean(np.sum(dev ** 2, axis=-1))))
    if np.all(np.array(msd) == 0):
        return StatReport(experiment, "msd_slope", float("nan"), target, 0.0, tol, "pass",
                          n_samples=n_paths, details={"eps": list(eps_list), "msd": msd,
                                                      "note": "slow path equals the unperturbed path"})
    slope, _ = fit_loglog(np.array(eps_list), np.array(msd))
    return StatReport(experiment, "msd_slope", slope, target, float("nan"), tol,
                      "pass" if abs(slope - target) <= tol else "fail", n_samples=n_paths,
                      wall_time=time.perf_counter() - t0, details={"eps": list(eps_list), "msd": msd})


def band_occupation_fit(widths, fractions, min_r2=0.95, experiment="occupation"):
    """Linear fit of mean occupation fraction against band width."""
    widths = np.asarray(widths, dtype=float)
    fractions = np.asarray(fractions, dtype=float)
    res = stats.linregress(widths, fractions)
    r2 = float(res.rvalue ** 2)
    return StatReport(experiment, "occupation_linear_r2", r2, 1.0, float("nan"), min_r2,
                      "pass" if r2 >= min_r2 else "fail", n_samples=len(widths),
                      details={"widths": widths.tolist(), "fractions": fractions.tolist(),
                               "slope": float(res.slope), "intercept": float(res.intercept)})

