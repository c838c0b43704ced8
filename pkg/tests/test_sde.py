import numpy as np
import pytest

from nullrec.models import get_model
from nullrec.sde import BandOccupation, PathBundle, QuadraticVariation, StepSizeError, TimeGrid, deviation, \
    ensemble_deviation, grid_for, simulate_ensemble, simulate_full, simulate_longtime, solve_unperturbed, \
    step_bound


def test_time_grid():
    g = TimeGrid.covering(1.0, 0.3)
    assert g.n_steps == 4 and g.dt == 0.25 and g.horizon == 1.0
    assert np.array_equal(g.index_of([0.0, 0.5, 1.0]), [0, 2, 4])
    with pytest.raises(ValueError):
        g.index_of(0.3)
    assert np.array_equal(g.nearest_index([0.3, 7.0]), [1, 4])
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.1, 0)


def test_step_bounds():
    assert step_bound(0.1) == pytest.approx(1e-3)
    assert step_bound(0.1, "longtime") == pytest.approx(1e-5)
    c = get_model("trivial")
    with pytest.raises(StepSizeError):
        simulate_ensemble(c, 0.1, 0.0, [0.0], TimeGrid(0.0, 0.01, 10), 4, 0)
    with pytest.raises(ValueError):
        simulate_ensemble(get_model("tanh_interface"), 0.5, 0.0, [0.0], grid_for(0.5, 0.1, "longtime"), 4, 0,
                          regime="longtime")


def test_single_path_matches_ensemble():
    c = get_model("tanh_interface")
    g = grid_for(0.2, 0.2)
    res = simulate_ensemble(c, 0.2, 0.1, [1.0], g, 7, 3, block_size=3)
    b = simulate_full(c, 0.2, 0.1, [1.0], g, 3, path_index=5)
    assert b.x[-1] == res.x[5, -1]
    assert np.array_equal(b.y[-1], res.y[5, -1])


def test_ensemble_independent_of_blocks_and_workers():
    c = get_model("gaussian_diffusion")
    g = grid_for(0.3, 0.3)
    a = simulate_ensemble(c, 0.3, 0.0, [0.2], g, 10, 5, block_size=10, workers=1)
    b = simulate_ensemble(c, 0.3, 0.0, [0.2], g, 10, 5, block_size=3, workers=2)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)


def test_trivial_model_is_brownian_with_frozen_slow():
    g = TimeGrid.covering(1.0, 0.01)
    res = simulate_ensemble(get_model("trivial"), 1.0, 0.0, [0.5], g, 4000, 1, observers=[QuadraticVariation()],
                            step_safety=1.0)
    assert np.all(res.y == 0.5)
    assert abs(res.x[:, -1].var() - 1.0) < 0.07
    assert abs(res.extras["qv"].mean() - 1.0) < 0.01


def test_band_occupation_grows_with_width():
    g = TimeGrid.covering(1.0, 1e-3)
    res = simulate_ensemble(get_model("trivial"), 1.0, 0.0, [0.0], g, 500, 2,
                            observers=[BandOccupation([0.1, 0.2, 0.4])], step_safety=1.0)
    m = res.extras["occupation"].mean(axis=0)
    assert np.all(np.diff(m) > 0)
    # E occupation of (-h, h) by Brownian motion on [0, 1] is about 2h sqrt(2/pi) for small h
    assert abs(m[0] - 0.2 * np.sqrt(2 / np.pi)) < 0.03


def test_unperturbed_linear_decay():
    c = get_model("tanh_interface", rate=1.0)
    g = TimeGrid.covering(1.0, 1e-2)
    y = solve_unperturbed(c, [2.0], g)
    assert abs(y[-1, 0] - 2 * np.exp(-1)) < 1e-9


def test_unperturbed_blow_up_detected():
    c = get_model("tanh_interface", rate=-50.0)
    with pytest.raises(OverflowError):
        solve_unperturbed(c, [1.0], TimeGrid.covering(1.0, 1e-2), bound=1e6)


def test_deviation_and_binary_round_trip(tmp_path):
    c = get_model("gaussian_diffusion")
    g = grid_for(0.3, 0.2)
    b = simulate_full(c, 0.3, 0.0, [0.5], g, 8, path_index=2)
    y_ref = solve_unperturbed(c, [0.5], g)
    dev = deviation(b, y_ref, 0.5)
    assert np.allclose(dev.zeta, (b.y - y_ref) / np.sqrt(0.3))
    b.save(tmp_path / "p.bin")
    back = PathBundle.load(tmp_path / "p.bin")
    assert np.array_equal(back.x, b.x) and np.array_equal(back.dw, b.dw) and back.path_index == 2
    b.export_csv(tmp_path / "p.csv", y_ref, 0.5)
    assert (tmp_path / "p.csv").read_text().startswith("t,x,y1,zeta1")


def test_ensemble_deviation_shape():
    c = get_model("gaussian_diffusion")
    g = grid_for(0.3, 0.3)
    res = simulate_ensemble(c, 0.3, 0.0, [0.5], g, 5, 1, record_times=g.times[[0, 5, g.n_steps]])
    z = ensemble_deviation(res, solve_unperturbed(c, [0.5], g), 0.5)
    assert z.shape == (5, 3, 1) and np.all(z[:, 0] == 0)


def test_longtime_path_starts_scaled():
    c = get_model("gaussian_longtime")
    g = grid_for(0.5, 0.05, "longtime")
    b = simulate_longtime(c, 0.5, 2.0, [1.0], g, 0)
    assert b.x[0] == 1.0 and b.regime == "longtime"
