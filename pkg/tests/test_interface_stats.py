import numpy as np
import pytest

from nullrec.interface_stats import CensoringError, ScheduleError, boundary_increment_limits, check_schedule, \
    default_schedule, deviation_exponent, excursion_exit_stats, exit_probability, interface_eigenfunction, \
    occupation_fraction
from nullrec.models import get_model


def test_exit_probability_formula():
    assert np.allclose(exit_probability(np.array([-0.2, 0.0, 0.1, 0.2]), 0.2), [0.0, 0.5, 0.75, 1.0])


def test_eigenfunction_is_continuous_with_matching_flux():
    f = interface_eigenfunction(4.0, 1.0, 0.7)
    h = 1e-6
    x = np.array([-h, 0.0, h])
    v = f(x)
    assert abs(v[0] - v[2]) < 1e-5


def test_occupation_fraction():
    x = np.array([[0.0, 0.5], [0.05, 0.05], [1.0, -0.01]])
    assert np.allclose(occupation_fraction(x, 0.1), [1.0, 0.5])


def test_deviation_exponent():
    assert deviation_exponent(get_model("gaussian_drift")) == 1.0
    assert deviation_exponent(get_model("gaussian_diffusion")) == 0.5


def test_schedules():
    ell, delta = default_schedule([0.1, 0.01], "longtime", 0.2)
    assert np.allclose(ell, [0.1 ** 1.8, 0.01 ** 1.8]) and np.allclose(delta, [0.1 ** 1.6, 0.01 ** 1.6])
    check_schedule(np.array([0.1, 0.01]), ell, delta)
    with pytest.raises(ScheduleError):
        default_schedule([0.1], gamma=0.6)
    with pytest.raises(ScheduleError):
        check_schedule(np.array([0.1]), np.array([0.3]), np.array([0.2]))


def test_excursion_argument_checks(gaussian_longtime):
    with pytest.raises(ScheduleError):
        excursion_exit_stats(gaussian_longtime, 0.1, 0.0, [0.0], 0.1, 0.2, 10, 0)
    with pytest.raises(ScheduleError):
        excursion_exit_stats(gaussian_longtime, 0.1, 0.15, [0.0], 0.2, 0.1, 10, 0)
    with pytest.raises(ValueError):
        excursion_exit_stats(get_model("tanh_interface"), 0.1, 0.0, [0.0], 0.2, 0.1, 10, 0)


def test_censoring_is_reported(gaussian_longtime):
    with pytest.raises(CensoringError):
        excursion_exit_stats(gaussian_longtime, 0.1, 0.0, [0.0], 0.2, 0.1, 200, 0, cap_factor=0.01)


def test_excursion_statistics_small_sample(gaussian_longtime):
    st = excursion_exit_stats(gaussian_longtime, 0.2, 0.0, [0.0], 0.4, 0.2, 1500, 1)
    assert abs(st.p_plus - 0.5) < 4 * st.p_plus_se
    assert st.n_censored == 0
    # unit speed: expected exit time from the centre of (-delta, delta) is delta^2
    assert abs(st.theta_mean / 0.16 - 1) < 0.1


def test_excursions_independent_of_blocks(gaussian_longtime):
    a = excursion_exit_stats(gaussian_longtime, 0.2, 0.0, [0.0], 0.4, 0.2, 30, 2, block_size=30)
    b = excursion_exit_stats(gaussian_longtime, 0.2, 0.0, [0.0], 0.4, 0.2, 30, 2, block_size=7, workers=2)
    assert a.p_plus == b.p_plus and np.array_equal(a.mean_dy_over_delta, b.mean_dy_over_delta)


def test_boundary_table(tmp_path, gaussian_longtime):
    tab = boundary_increment_limits(gaussian_longtime, [0.0], [0.3, 0.2], 300, 3, starts=(0.0, 1.0))
    assert len(tab.rows) == 4 and len(tab.at_start(1.0)) == 2
    assert tab.beta_target[0] == pytest.approx(np.sqrt(np.pi), abs=1e-6)
    tab.to_csv(tmp_path / "b.csv")
    head = (tmp_path / "b.csv").read_text().splitlines()[0].split(",")
    assert {"drift1", "second11", "beta1", "alpha11"} <= set(head)
    assert isinstance(tab.monotone(), bool)
