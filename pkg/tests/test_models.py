import pickle

import numpy as np
import pytest

from nullrec.models import get_model, list_models


def test_registry_lists_bundled_models():
    names = list_models()
    for n in ("trivial", "sine_speed", "gaussian_drift", "gaussian_diffusion", "gaussian_longtime",
              "tanh_interface", "box", "odd_drift", "modulated"):
        assert n in names and names[n]


def test_unknown_model():
    with pytest.raises(KeyError):
        get_model("nope")


@pytest.mark.parametrize("name", ["trivial", "gaussian_drift", "tanh_interface", "modulated"])
def test_shapes(name):
    c = get_model(name)
    x = np.linspace(-2, 2, 5)
    y = np.zeros((5, c.d))
    assert c.phi(x, y).shape == (5, c.k)
    assert c.b2(x, y).shape == (5, c.d)
    assert c.sigma(x, y).shape == (5, c.d, c.k)
    assert c.b1(y).shape == (5, c.d)
    assert c.b1_jac(y).shape == (5, c.d, c.d)


def test_vanishing_flags():
    assert get_model("gaussian_drift").sigma_vanishes
    assert not get_model("gaussian_diffusion").sigma_vanishes
    assert get_model("gaussian_longtime").b1_vanishes
    assert not get_model("tanh_interface").b1_vanishes
    t = get_model("trivial")
    assert t.sigma_vanishes and t.b2_vanishes


def test_pickle_by_name_keeps_params():
    c = get_model("tanh_interface", a_plus=9.0)
    back = pickle.loads(pickle.dumps(c))
    x = np.array([50.0])
    assert np.allclose(back.phi_sq(x, np.zeros((1, 1))), 9.0, rtol=1e-6)


def test_jacobian_matches_finite_difference():
    c = get_model("gaussian_diffusion", d=2, rate=0.7)
    y = np.array([[0.3, -0.4]])
    h = 1e-6
    fd = np.stack([(c.b1(y + h * e) - c.b1(y - h * e))[0] / (2 * h) for e in np.eye(2)], axis=1)
    assert np.allclose(c.b1_jac(y)[0], fd, atol=1e-6)
