import csv

import numpy as np
import pytest

from pathis.core import (
    ConfigError,
    Image,
    NumericError,
    Rng,
    SensorData,
    default_time_config,
    make_grid,
    make_sensor_arc,
)
from pathis.forward import ForwardOperator
from pathis.recon import (
    HisConfig,
    MbConfig,
    normalized_coords,
    reconstruct_his,
    reconstruct_mb,
    reconstruct_tr,
    reconstruct_ubp,
    tv_value_grad,
)
from pathis.wave import FdtdConfig, fdtd_forward


def setup(n=16, k=16, span=360.0):
    g = make_grid(n, 0.05)
    s = make_sensor_arc(k, 0.022, span)
    t = default_time_config(g, s)
    return g, s, t, ForwardOperator(g, s, t)


# --- UBP ------------------------------------------------------------------------

def test_ubp_zero_data():
    g, s, t, _ = setup()
    assert not np.any(reconstruct_ubp(SensorData.zeros(s.k, t), g, s, t).values)


def test_ubp_linear_before_clipping():
    g, s, t, op = setup()
    y = SensorData(s.k, t.m_samples, t.dt_s, t.c_mps, op.apply(Rng(1).uniform(g.n ** 2)))
    a = reconstruct_ubp(y, g, s, t, clip=False).values
    b = reconstruct_ubp(y.like(2.5 * y.values), g, s, t, clip=False).values
    assert np.allclose(b, 2.5 * a, rtol=1e-12, atol=1e-12 * np.abs(a).max())


def test_ubp_locates_a_point():
    n = 32
    g = make_grid(n, 0.05)
    s = make_sensor_arc(64, 0.022, 360)
    t = default_time_config(g, s)
    x = np.zeros((n, n))
    x[10, 20] = 1.0
    y = fdtd_forward(Image(g, x.ravel()), s, t, FdtdConfig(refine=2))
    r = reconstruct_ubp(y, g, s, t).array
    i, j = np.unravel_index(np.argmax(r), r.shape)
    assert abs(i - 10) <= 1 and abs(j - 20) <= 1


def test_ubp_metadata_mismatch():
    g, s, t, _ = setup()
    with pytest.raises(ConfigError):
        reconstruct_ubp(SensorData(s.k + 1, t.m_samples, t.dt_s, t.c_mps, np.zeros((s.k + 1) * t.m_samples)), g, s, t)


def test_tr_zero_data():
    g, s, t, _ = setup()
    r = reconstruct_tr(SensorData.zeros(s.k, t), g, s, FdtdConfig(refine=1))
    assert not np.any(r.values)


# --- model-based ----------------------------------------------------------------

def test_tv_gradient_matches_finite_differences():
    z = Rng(3).uniform(36).reshape(6, 6)
    val, grad = tv_value_grad(z, 0.1)
    e = 1e-6
    for idx in [(0, 0), (2, 3), (5, 5), (4, 0)]:
        zp, zm = z.copy(), z.copy()
        zp[idx] += e
        zm[idx] -= e
        fd = (tv_value_grad(zp, 0.1)[0] - tv_value_grad(zm, 0.1)[0]) / (2 * e)
        assert fd == pytest.approx(grad[idx], rel=1e-6, abs=1e-9)
    assert tv_value_grad(np.zeros((4, 4)), 0.1)[0] == pytest.approx(16 * 0.1)


def test_mb_zero_data_is_fixed_point():
    g, s, t, op = setup()
    res = reconstruct_mb(SensorData.zeros(s.k, t), op, MbConfig(iters=5))
    assert not np.any(res.image.values)


def test_mb_fidelity_monotone_and_reduced_100x():
    g, s, t, op = setup()
    xs = Rng(4).uniform(g.n ** 2)
    y = SensorData(s.k, t.m_samples, t.dt_s, t.c_mps, op.apply(xs))
    res = reconstruct_mb(y, op, MbConfig(lam=0.0, iters=300))
    f = np.array(res.fidelity)
    assert len(f) == 301
    assert np.all(np.diff(f) <= 1e-12 * f[0])
    assert f[-1] < f[0] / 100
    assert res.image.values.min() >= 0


def test_mb_deterministic_and_validated():
    g, s, t, op = setup()
    y = SensorData(s.k, t.m_samples, t.dt_s, t.c_mps, op.apply(Rng(5).uniform(g.n ** 2)))
    a = reconstruct_mb(y, op, MbConfig(iters=20)).image.values
    b = reconstruct_mb(y, op, MbConfig(iters=20)).image.values
    assert np.array_equal(a, b)
    with pytest.raises(ConfigError):
        MbConfig(lam=-1)
    with pytest.raises(ConfigError):
        MbConfig(iters=0)


def test_mb_step_rule():
    g, s, t, op = setup()
    y = SensorData(s.k, t.m_samples, t.dt_s, t.c_mps, op.apply(Rng(5).uniform(g.n ** 2)))
    cfg = MbConfig(lam=0.02, eps_tv=0.05, iters=2, step_safety=0.9)
    assert reconstruct_mb(y, op, cfg).step == pytest.approx(0.9 / (2 + 8 * 0.02 / 0.05))


# --- HIS ------------------------------------------------------------------------

def test_coords_normalized():
    c = normalized_coords(4)
    assert c.shape == (16, 2)
    assert np.allclose(c[0], (-1, -1)) and np.allclose(c[-1], (1, 1))
    assert np.allclose(c[1], (-1, -1 / 3))


def test_his_defaults():
    cfg = HisConfig()
    assert (cfg.epochs, cfg.lr, cfg.l, cfg.sigma, cfg.gain_mode) == (10000, 1e-4, 128, 1.0, "off")
    assert (cfg.beta1, cfg.beta2, cfg.eps) == (0.9, 0.999, 1e-8)
    with pytest.raises(ConfigError):
        HisConfig(epochs=0)
    with pytest.raises(ConfigError):
        HisConfig(gain_mode="sometimes")


def test_his_loss_decreases_on_constant_image():
    g, s, t, op = setup()
    y = SensorData(s.k, t.m_samples, t.dt_s, t.c_mps, op.apply(np.full(g.n ** 2, 0.5)))
    img, log = reconstruct_his(y, op, HisConfig(epochs=50, seed=1))
    loss = np.array(log.loss)
    assert np.all(np.isfinite(loss))
    assert len(log) == 50 and len(log.seconds) == 50
    assert np.all(np.diff(loss[-25:]) < 0)
    assert loss[-1] < loss[0]
    assert np.mean(loss[-5:]) < np.mean(loss[:5])
    assert np.all((img.values > 0) & (img.values < 1))


def test_his_deterministic(tmp_path):
    g, s, t, op = setup(n=12, k=8)
    y = SensorData(s.k, t.m_samples, t.dt_s, t.c_mps, op.apply(Rng(2).uniform(144)))
    a, la = reconstruct_his(y, op, HisConfig(epochs=5, seed=3))
    b, lb = reconstruct_his(y, op, HisConfig(epochs=5, seed=3))
    assert np.array_equal(a.values, b.values) and la.loss == lb.loss
    path = tmp_path / "log.csv"
    la.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["epoch", "loss", "seconds"]
    assert len(rows) == 6 and float(rows[1][1]) == la.loss[0]


def test_his_gain_auto_handles_unit_mismatch():
    g, s, t, op = setup(n=12, k=8)
    x = Rng(6).uniform(144)
    y = SensorData(s.k, t.m_samples, t.dt_s, t.c_mps, 1e4 * op.apply(x))
    _, off = reconstruct_his(y, op, HisConfig(epochs=30, gain_mode="off"))
    _, auto = reconstruct_his(y, op, HisConfig(epochs=30, gain_mode="auto"))
    assert auto.loss[-1] < 0.1 * off.loss[-1]
    assert auto.loss[-1] < auto.loss[0]


def test_his_non_finite_loss_names_epoch():
    g, s, t, op = setup(n=12, k=8)
    vals = np.zeros((s.k, t.m_samples))
    vals[0, 3] = np.nan
    y = SensorData(s.k, t.m_samples, t.dt_s, t.c_mps, vals)
    with pytest.raises(NumericError, match="epoch 0"):
        reconstruct_his(y, op, HisConfig(epochs=3))


def test_his_callback_sees_every_epoch():
    g, s, t, op = setup(n=12, k=8)
    y = SensorData.zeros(s.k, t)
    seen = []
    reconstruct_his(y, op, HisConfig(epochs=4), callback=lambda e, loss, p: seen.append(e))
    assert seen == [0, 1, 2, 3]
