import numpy as np
import pytest
from scipy.linalg import expm

from nullrec.coefficients import AveragedInterfaceData, average_interface
from nullrec.limits import InversionError, build_V, build_X0, direct_em_X0, invert_clock, limit_ensemble, \
    limit_path, propagators, sample_on_clock
from nullrec.models import get_model
from nullrec.sde import TimeGrid
from nullrec.validators import ks_distance

GRID = TimeGrid.covering(1.0, 1e-3)


def test_invert_clock_picks_first_reaching_index():
    t = np.array([[0.0, 0.4, 0.4, 0.9, 1.3]])
    k = invert_clock(t, np.array([0.0, 0.4, 0.5, 1.0]))
    assert np.array_equal(k, [[0, 1, 3, 4]])
    vals = np.arange(5.0)[None, :, None]
    assert np.array_equal(sample_on_clock(vals, k)[:, 0, 0], [0, 1, 3, 4])


def test_invert_clock_rejects_short_clock():
    with pytest.raises(InversionError):
        invert_clock(np.array([[0.0, 0.5]]), np.array([0.0, 1.0]))


def test_oscillating_brownian_side_probability():
    # martingale with half-normal sides of scales sqrt(a+), sqrt(a-) => P(x > 0) = sqrt(a-)/(sqrt(a+)+sqrt(a-))
    avg = AveragedInterfaceData.constant(4.0, 1.0, [0.0], [[0.0]])
    x, L = build_X0(avg, np.zeros((GRID.n_steps + 1, 1)), GRID, 3, np.arange(4000))
    p = np.mean(x[-1] > 0)
    assert abs(p - 1 / 3) < 4 * np.sqrt(2 / 9 / 4000)
    assert abs(x[-1].mean()) < 4 * x[-1].std() / np.sqrt(4000)
    assert np.all(np.diff(L.L, axis=0) >= 0)


def test_time_change_agrees_with_direct_euler():
    avg = AveragedInterfaceData.constant(4.0, 1.0, [0.0], [[0.0]])
    y_ref = np.zeros((GRID.n_steps + 1, 1))
    a, _ = build_X0(avg, y_ref, GRID, 5, np.arange(3000))
    b = direct_em_X0(avg, y_ref, GRID, 5, np.arange(3000))
    ks, p = ks_distance(a[-1], b[-1])
    assert p > 1e-3


def test_build_V_variance_matches_local_time():
    L = np.tile(np.linspace(0, 2.0, 101)[:, None], (1, 4000))
    V = build_V(L, 1, 9, np.arange(4000))
    assert abs(V[-1, :, 0].var() - 2.0) < 0.15
    with pytest.raises(ValueError):
        build_V(L[::-1], 1, 9, np.arange(4000))


def test_propagators_are_matrix_exponentials():
    c = get_model("gaussian_diffusion", d=2, rate=0.7)
    y = np.zeros((3, 2))
    P = propagators(c.b1_jac, y, 0.1)
    assert np.allclose(P[0], expm(c.b1_jac(y)[0] * 0.1))


@pytest.mark.slow
def test_drift_limit_mean_equals_beta_times_local_time():
    c = get_model("gaussian_drift", b1_const=0.5)
    ens = limit_ensemble("drift", c, average_interface(c), [0.0], GRID, 3000, 11)
    w = ens.w[:, -1, 0]
    assert abs(w.mean() - np.sqrt(2)) < 4 * w.std() / np.sqrt(w.size) + 0.03


@pytest.mark.slow
def test_diffusive_limit_second_moment():
    c = get_model("gaussian_diffusion", rate=0.0)
    ens = limit_ensemble("diffusive", c, average_interface(c), [0.0], GRID, 3000, 12)
    w2 = ens.w[:, -1, 0] ** 2
    # E zeta^2 = alpha E L(1) = sqrt(pi) sqrt(2/pi)
    assert abs(w2.mean() - np.sqrt(2)) < 4 * w2.std() / np.sqrt(w2.size) + 0.04


def test_longtime_limit_moves_only_on_interface():
    c = get_model("gaussian_longtime")
    ens = limit_ensemble("longtime", c, average_interface(c), [1.0], GRID, 200, 13)
    assert ens.extras["cantor_violations"].sum() == 0
    assert np.all(ens.extras["cantor_steps"] == GRID.n_steps)
    lp = limit_path("longtime", c, average_interface(c), [1.0], GRID, 13, 0)
    moved = np.flatnonzero(np.diff(lp.w[:, 0]) != 0)
    assert moved.size > 0 and np.all(np.diff(lp.L)[moved] > 0)


def test_limit_ensemble_independent_of_blocks():
    c = get_model("gaussian_diffusion")
    avg = average_interface(c)
    g = TimeGrid.covering(0.2, 1e-3)
    a = limit_ensemble("diffusive", c, avg, [0.5], g, 9, 4, block_size=9)
    b = limit_ensemble("diffusive", c, avg, [0.5], g, 9, 4, block_size=2, workers=2)
    assert np.array_equal(a.w, b.w) and np.array_equal(a.x, b.x)


def test_unknown_kind():
    c = get_model("trivial")
    with pytest.raises(ValueError):
        limit_ensemble("other", c, average_interface(c), [0.0], GRID, 2, 0)
