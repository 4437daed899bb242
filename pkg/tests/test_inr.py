import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathis.core import BadMagicError, DimensionError, Rng, TruncatedError
from pathis.inr import (
    HIDDEN,
    PARAM_ORDER,
    Adam,
    FourierEncoding,
    adam_step,
    encode,
    flatten,
    init_mlp,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    param_shapes,
    save_checkpoint,
    sigmoid,
    unflatten,
)
from oracles import reference as ref

FROZEN = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


def small_params(l=3, seed=0):
    p = init_mlp(l, seed)
    r = Rng(seed + 100)
    for k in ("b1", "b2", "b3"):
        p[k] = 0.1 * r.normal(p[k].size).reshape(p[k].shape)
    return p


# --- encoding -----------------------------------------------------------------

def test_origin_encodes_to_ones_then_zeros():
    enc = FourierEncoding(5, 1.0, 0)
    f = encode(enc, np.zeros((1, 2)))
    assert np.array_equal(f[0], np.r_[np.ones(5), np.zeros(5)])
    assert enc.dim == 10


def test_seed42_matrix_is_first_eight_deviates():
    enc = FourierEncoding(4, 1.0, 42)
    assert np.allclose(enc.b.ravel(), FROZEN["normals_seed42_first8"], rtol=0, atol=1e-15)
    assert np.allclose(FourierEncoding(4, 2.5, 42).b, 2.5 * enc.b)


@settings(max_examples=30)
@given(st.integers(1, 40), st.integers(0, 2 ** 32), st.floats(0.1, 10.0))
def test_cos_sin_identity(l, seed, sigma):
    enc = FourierEncoding(l, sigma, seed)
    pts = 2 * Rng(seed).uniform(20).reshape(10, 2) - 1
    f = enc(pts)
    assert np.allclose(f[:, :l] ** 2 + f[:, l:] ** 2, 1.0, atol=1e-12)


@settings(max_examples=30)
@given(st.integers(1, 30), st.integers(0, 2 ** 32))
def test_encoding_lipschitz(l, seed):
    enc = FourierEncoding(l, 1.0, seed)
    r = Rng(seed ^ 0x55)
    p = 2 * r.uniform(40).reshape(20, 2) - 1
    q = 2 * r.uniform(40).reshape(20, 2) - 1
    lhs = np.linalg.norm(enc(p) - enc(q), axis=1)
    rhs = 2 * np.pi * np.linalg.norm(enc.b) * np.linalg.norm(p - q, axis=1)
    assert np.all(lhs <= rhs + 1e-12)


# --- init ---------------------------------------------------------------------

def test_init_shapes_bounds_and_zero_biases():
    p = init_mlp(128, 7)
    assert list(p) == list(PARAM_ORDER)
    for k, shape in param_shapes(128).items():
        assert p[k].shape == shape
    assert p["w1"].shape == (HIDDEN, 256)
    for k in ("b1", "b2", "b3"):
        assert not np.any(p[k])
    assert np.abs(p["w1"]).max() <= np.sqrt(6 / 256)
    assert np.abs(p["w2"]).max() <= np.sqrt(6 / 256)
    assert np.abs(p["w3"]).max() <= np.sqrt(6 / 256)


def test_init_draw_order():
    p = init_mlp(2, 5)
    u = Rng(5).uniform(HIDDEN * 4 + HIDDEN * HIDDEN + HIDDEN)
    w1 = np.sqrt(6 / 4) * (2 * u[:HIDDEN * 4] - 1)
    w3 = np.sqrt(6 / HIDDEN) * (2 * u[-HIDDEN:] - 1)
    assert np.array_equal(p["w1"].ravel(), w1)
    assert np.array_equal(p["w3"].ravel(), w3)


def test_init_deterministic():
    a, b = init_mlp(16, 3), init_mlp(16, 3)
    assert all(np.array_equal(a[k], b[k]) for k in PARAM_ORDER)
    assert not np.array_equal(a["w1"], init_mlp(16, 4)["w1"])


# --- forward ------------------------------------------------------------------

def test_zero_params_give_half():
    p = {k: np.zeros_like(v) for k, v in init_mlp(3).items()}
    out, _ = mlp_forward(p, np.ones((4, 6)))
    assert np.array_equal(out, np.full(4, 0.5))


def test_forward_matches_direct_oracle():
    p = small_params(3, 1)
    f = Rng(2).normal(30).reshape(5, 6)
    out, _ = mlp_forward(p, f)
    assert np.allclose(out, ref.mlp_direct(p, f), rtol=0, atol=1e-12)


def test_forward_outputs_in_open_interval_and_deterministic():
    p = init_mlp(4, 0)
    f = 50 * Rng(1).normal(80).reshape(10, 8)
    a, _ = mlp_forward(p, f)
    b, _ = mlp_forward(p, f)
    assert np.array_equal(a, b)
    assert np.all((a > 0) & (a < 1))


def test_sigmoid_is_stable():
    z = np.array([-800.0, -1.0, 0.0, 1.0, 800.0])
    s = sigmoid(z)
    assert np.all(np.isfinite(s))
    assert s[2] == 0.5 and s[0] == 0.0 and s[-1] == 1.0


def test_forward_dimension_check():
    with pytest.raises(DimensionError):
        mlp_forward(init_mlp(3), np.zeros((2, 5)))


# --- backward -----------------------------------------------------------------

def _loss(p, f, w):
    out, _ = mlp_forward(p, f)
    return float(out @ w)


def test_gradient_check_100_coordinates():
    l = 3
    p = small_params(l, 4)
    f = Rng(5).normal(10 * 2 * l).reshape(10, 2 * l)
    w = Rng(6).normal(10)
    _, cache = mlp_forward(p, f)
    g = flatten(mlp_backward(cache, w))
    theta = flatten(p)
    r = Rng(7)
    idx = (r.uniform(100) * theta.size).astype(int)
    step = 1e-5
    worst = 0.0
    for i in idx:
        tp, tm = theta.copy(), theta.copy()
        tp[i] += step
        tm[i] -= step
        fd = (_loss(unflatten(tp, l), f, w) - _loss(unflatten(tm, l), f, w)) / (2 * step)
        denom = max(abs(fd), abs(g[i]), 1e-7)
        worst = max(worst, abs(fd - g[i]) / denom)
    assert worst < 1e-4


def test_backward_linear_in_output_gradient():
    p = small_params(2, 1)
    f = Rng(3).normal(16).reshape(4, 4)
    _, cache = mlp_forward(p, f)
    g = Rng(4).normal(4)
    one, two = mlp_backward(cache, g), mlp_backward(cache, 2 * g)
    zero = mlp_backward(cache, np.zeros(4))
    for k in PARAM_ORDER:
        assert np.allclose(two[k], 2 * one[k], rtol=1e-14, atol=0)
        assert not np.any(zero[k])


def test_backward_rejects_stale_cache():
    p = small_params(2, 1)
    _, cache = mlp_forward(p, np.zeros((4, 4)))
    with pytest.raises(DimensionError):
        mlp_backward(cache, np.zeros(5))


# --- adam ---------------------------------------------------------------------

def test_adam_defaults():
    a = Adam(init_mlp(1))
    assert (a.lr, a.beta1, a.beta2, a.eps) == (1e-4, 0.9, 0.999, 1e-8)


def test_adam_zero_gradient_is_no_op():
    p = init_mlp(2, 0)
    before = {k: v.copy() for k, v in p.items()}
    a = Adam(p)
    a.step(p, {k: np.zeros_like(v) for k, v in p.items()})
    assert all(np.array_equal(p[k], before[k]) for k in p)
    assert a.t == 1


def test_adam_first_step_size():
    p = {"w": np.array([1.0])}
    a = Adam(p)
    a.step(p, {"w": np.array([0.3])})
    assert p["w"][0] - 1.0 == pytest.approx(-1e-4 * 0.3 / (0.3 + 1e-8), rel=1e-12)
    assert p["w"][0] - 1.0 == pytest.approx(-9.99999967e-5, rel=1e-8)


def test_adam_positive_gradient_decreases_everything():
    p = init_mlp(2, 9)
    before = flatten(p).copy()
    state = Adam(p)
    for _ in range(3):
        p, state = adam_step(state, p, {k: np.full_like(v, 0.7) for k, v in p.items()})
    assert np.all(flatten(p) < before)
    assert state.t == 3
    assert all(np.all(v >= 0) for v in state.v.values())


# --- checkpoints --------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    p = init_mlp(3, 1)
    path = tmp_path / "w.pmw"
    save_checkpoint(path, p)
    back = load_checkpoint(path)
    for k in PARAM_ORDER:
        assert np.array_equal(back[k], p[k].astype(np.float32))
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(TruncatedError):
        load_checkpoint(path)
    path.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(BadMagicError):
        load_checkpoint(path)
