import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullrec.local_time import BandLocalTime, TanakaLocalTime, default_band, local_time_band, local_time_tanaka, \
    off_band_increments, sgn_sym
from nullrec.models import get_model
from nullrec.sde import TimeGrid, simulate_ensemble


def test_symmetric_sign():
    assert np.array_equal(sgn_sym(np.array([-2.0, 0.0, 3.0])), [-1, 0, 1])


def test_band_rejects_narrow_band():
    x = np.zeros(11)
    with pytest.raises(ValueError):
        local_time_band(x, np.zeros(10), 0.05, dt=0.01)
    with pytest.raises(ValueError):
        local_time_band(x, np.zeros(9), 0.5)


def test_tanaka_on_deterministic_crossing():
    # |x| - int sgn dx is zero for a path that never returns to the origin
    x = np.array([1.0, 0.5, 0.2, -0.3, -1.0])
    L = local_time_tanaka(x).L
    # crossing at step 2->3: |x3| - |x2| - sgn(x2) dx = 0.3 - 0.2 + 0.5 = 0.6
    assert np.allclose(L, [0.0, 0.0, 0.0, 0.6, 0.6])


def test_tanaka_from_origin_and_clamp():
    # sgn(0) = 0 makes a start at the origin produce |x1| directly; raw increments
    # are non-negative by convexity so exact paths never need the clamp
    prof = local_time_tanaka(np.array([0.0, 0.2, 0.0]))
    assert np.allclose(prof.L, [0.0, 0.2, 0.2])
    assert prof.clamp == 0.0


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=60))
@settings(max_examples=100, deadline=None)
def test_estimators_are_non_decreasing(steps):
    x = np.concatenate([[0.0], np.cumsum(steps)])
    assert np.all(np.diff(local_time_tanaka(x).L) >= 0)
    assert np.all(np.diff(local_time_band(x, np.diff(x) ** 2, 0.3).L) >= 0)


def test_off_band_increments():
    x = np.array([0.0, 0.5, 0.01, 0.5])
    L = np.array([0.0, 0.1, 0.2, 0.2])
    assert off_band_increments(x, L, 0.1) == 1


@pytest.mark.slow
def test_brownian_local_time_mean():
    g = TimeGrid.covering(1.0, 1e-3)
    res = simulate_ensemble(get_model("trivial"), 1.0, 0.0, [0.0], g, 3000, 4,
                            observers=[BandLocalTime(default_band(g.dt)), TanakaLocalTime()], step_safety=1.0)
    target = np.sqrt(2 / np.pi)
    for key in ("lt_band", "lt_tanaka"):
        L = res.extras[key][:, -1]
        assert abs(L.mean() - target) < 4 * L.std() / np.sqrt(L.size) + 0.03
