import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullrec.coefficients import AssumptionViolation, AveragedInterfaceData, CoefficientSet, \
    TailBoundError, average_interface, estimate_a_pm, improper_integral, interface_diffusion_alpha, \
    interface_drift_beta, matrix_sqrt_psd, validate_assumptions
from nullrec.models import get_model

SQRT_PI = np.sqrt(np.pi)
# independent high-precision quadrature of exp(-x^2) / (2.5 + 1.5 tanh x)
TANH_ALPHA = 0.79552652834567610363


def test_sine_speed_average_is_sqrt3():
    est = estimate_a_pm(get_model("sine_speed"), [0.0])
    assert abs(est.a_plus - np.sqrt(3)) < 1e-4
    assert abs(est.a_minus - np.sqrt(3)) < 1e-4
    assert est.converged


def test_tanh_speeds_approach_limits():
    est = estimate_a_pm(get_model("tanh_interface"), [0.0])
    assert abs(est.a_plus - 4) < 1e-3 and abs(est.a_minus - 1) < 1e-3


def test_gaussian_beta_and_alpha():
    beta, be = interface_drift_beta(get_model("gaussian_drift"), [0.3])
    assert abs(beta[0] - SQRT_PI) < 1e-6 and be[0] < 1e-6
    alpha, ae = interface_diffusion_alpha(get_model("gaussian_diffusion", d=2), [0.1, -0.2])
    assert np.allclose(alpha, SQRT_PI * np.eye(2), atol=1e-6)
    assert np.allclose(alpha, alpha.T)


def test_tanh_alpha_matches_independent_quadrature():
    alpha, _ = interface_diffusion_alpha(get_model("tanh_interface"), [1.0], abs_tol=1e-10)
    assert abs(alpha[0, 0] - TANH_ALPHA) < 1e-8


def test_box_model_with_breakpoints():
    c = get_model("box")
    assert abs(interface_drift_beta(c, [0.0])[0][0] - 1.0) < 1e-8
    assert abs(interface_diffusion_alpha(c, [0.0])[0][0, 0] - 1.0) < 1e-8


def test_odd_drift_cancels():
    assert abs(interface_drift_beta(get_model("odd_drift"), [0.0])[0][0]) < 1e-8


def test_improper_integral_geometric_tail():
    v, e = improper_integral(lambda s: np.array([1.0 / (1.0 + s * s) ** 2]), 1e-7)
    assert abs(v[0] - np.pi / 2) < 1e-6


def test_improper_integral_rejects_heavy_tail():
    with pytest.raises(TailBoundError):
        improper_integral(lambda s: np.array([1.0 / (1.0 + abs(s))]), 1e-6, r_max=256)


def test_validate_assumptions_passes_for_registry():
    for name in ("trivial", "sine_speed", "gaussian_drift", "gaussian_diffusion", "gaussian_longtime",
                 "tanh_interface", "box", "odd_drift", "modulated"):
        assert validate_assumptions(get_model(name)).ok, name


def _bad_model(phi_sq=0.2, drift_scale=1.0):
    jac = lambda y: np.zeros((y.shape[0], 1, 1))
    return CoefficientSet("bad", 1, 1, lambda x, y: np.full((x.shape[0], 1), np.sqrt(phi_sq)),
                          lambda y: np.zeros_like(y), jac,
                          lambda x, y: (drift_scale * np.exp(-x ** 2))[:, None],
                          lambda x, y: np.zeros((x.shape[0], 1, 1)),
                          lambda x: np.exp(-x ** 2), lambda x: np.zeros_like(x), 0.5, 2.0)


def test_validate_assumptions_reports_violations():
    with pytest.raises(AssumptionViolation) as err:
        validate_assumptions(_bad_model())
    assert err.value.report.ellipticity_violations > 0
    rep = validate_assumptions(_bad_model(1.0, 2.0), strict=False)
    assert rep.b_hat_violations > 0 and not rep.ok


def test_averaged_data_constant_models():
    avg = average_interface(get_model("gaussian_longtime"))
    ap, am, beta, alpha = avg.constants()
    assert ap == pytest.approx(1.0, abs=1e-6) and am == pytest.approx(1.0, abs=1e-6)
    assert beta[0] == pytest.approx(SQRT_PI, abs=1e-7)
    assert alpha[0, 0] == pytest.approx(SQRT_PI, abs=1e-7)
    x = np.array([-1.0, 0.0, 2.0])
    assert np.allclose(avg.speed(x, np.zeros((3, 1))), 1.0, atol=1e-6)


def test_speed_assigns_origin_to_plus_side():
    avg = AveragedInterfaceData.constant(4.0, 1.0, [0.0], [[1.0]])
    assert np.array_equal(avg.speed(np.array([-1e-9, 0.0, 1e-9]), np.zeros((3, 1))), [1.0, 4.0, 4.0])


def test_y_dependent_averages():
    c = get_model("modulated")
    avg = average_interface(c, y_grid=np.linspace(-3, 3, 61))
    y = np.array([[0.0], [1.0], [-2.0]])
    assert np.allclose(avg.beta(y)[:, 0], SQRT_PI * (1 + 0.5 * np.tanh(y[:, 0])), atol=1e-3)
    assert np.allclose(avg.alpha(y)[:, 0, 0], SQRT_PI * (1 + 0.25 * np.cos(y[:, 0])) ** 2, atol=1e-3)
    with pytest.raises(ValueError):
        avg.constants()


def test_averaged_data_pickles():
    avg = average_interface(get_model("gaussian_longtime"))
    back = pickle.loads(pickle.dumps(avg))
    assert np.allclose(back.constants()[2], avg.constants()[2])


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
@settings(max_examples=60, deadline=None)
def test_matrix_sqrt_squares_back(vals):
    a = np.array(vals).reshape(2, 2)
    m = a @ a.T
    r = matrix_sqrt_psd(m)
    assert np.allclose(r @ r, m, atol=1e-6 * max(1.0, np.abs(m).max()))
    assert np.allclose(r, r.T)


def test_matrix_sqrt_rejects_indefinite():
    with pytest.raises(ValueError):
        matrix_sqrt_psd(np.diag([1.0, -1.0]))
