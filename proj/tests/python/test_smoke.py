"""End-to-end smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import cbdae


def test_filters_pass_constants_through():
    x = [2.5] * 40
    for f in (cbdae.median_filter, cbdae.mean_filter):
        assert f(x, 5) == pytest.approx(x)
    assert cbdae.savgol_filter(x, 7, 2) == pytest.approx(x)
    assert cbdae.ema_filter(x, 0.33) == pytest.approx(x)


def test_median_kills_isolated_impulses():
    x = [1.0] * 50
    for t in range(4, 50, 9):
        x[t] = 50.0
    y = cbdae.median_filter(x, 5)
    assert max(abs(v - 1.0) for v in y) == 0.0


def test_rmse_identity_and_offset():
    a = [1.0, 2.0, 3.0]
    assert cbdae.rmse(a, a) == 0.0
    assert cbdae.rmse(a, [2.0, 3.0, 4.0]) == pytest.approx(1.0)


def test_simulate_shape_and_noise():
    data = cbdae.simulate_quadtank(duration=800, sigma=1.0, seed=3)
    noisy = data["noisy"]
    clean = data["clean"]
    assert noisy.shape == (800, 6)
    assert clean.shape == (800, 6)
    # inputs are shared and clean
    assert np.array_equal(noisy[:, :2], clean[:, :2])
    diff = noisy[:, 2:] - clean[:, 2:]
    core = diff[np.abs(diff) < 10]
    assert abs(core.std() - 1.0) < 0.1


def test_train_denoise_roundtrip(tmp_path):
    data = cbdae.simulate_quadtank(duration=1200, sigma=1.0, seed=5)
    cfg = {
        "window": 10,
        "batch": 8,
        "seq_members": 4,
        "rand_members": 4,
        "hidden": [8, 8],
        "proj_inner": 8,
        "proj_dim": 4,
        "epochs": 2,
        "c_d": 0.5,
        "seed": 9,
    }
    model, log = cbdae.train(data["noisy"], cfg, "cbdae", input_channels=[0, 1])
    assert model.window == 10
    assert model.epochs_trained == 2
    assert len(log) == 2
    assert all(math.isfinite(row["l_total"]) for row in log)

    out = model.denoise(data["noisy"][:200])
    assert out.shape == (200, 6)
    assert np.isnan(out[: 10 - 1]).all()
    assert np.isfinite(out[10:]).all()

    path = tmp_path / "model.ckpt"
    model.save(str(path))
    again = cbdae.Model.load(str(path))
    out2 = again.denoise(data["noisy"][:200])
    assert np.array_equal(out[10:], out2[10:])

    lat = model.latent(data["noisy"][:100])
    assert lat.shape == (100 - 10 + 1, 8)


def test_pca_and_smoothness():
    rng = np.random.default_rng(0)
    t = rng.uniform(-2, 2, size=300)
    pts = np.stack([1.0 + t, -2.0 + 2 * t, 0.5 * t], axis=1)
    res = cbdae.pca_project(pts)
    assert res["projection"].shape == (300, 2)
    assert res["explained"][0] > 0
    line = np.stack([np.arange(50.0), 2 * np.arange(50.0)], axis=1)
    assert cbdae.smoothness_score(line) < 1e-12


def test_errors_surface_as_python_exceptions():
    with pytest.raises(cbdae.CbdaeError):
        cbdae.rmse([1.0, 2.0], [1.0])
    with pytest.raises(cbdae.CbdaeError):
        cbdae.ema_filter([1.0], 0.0)
