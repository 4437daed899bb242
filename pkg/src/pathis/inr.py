"""Coordinate network: Fourier features -> 3-layer ReLU MLP -> sigmoid.

Forward, backward and Adam are written out by hand in numpy. Parameters
live in a dict keyed w1, b1, w2, b2, w3, b3 (in that order); weights are
stored (fan_out, fan_in) so a layer computes ``z @ w.T + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BadMagicError, DimensionError, Rng, TruncatedError

HIDDEN = 256
PARAM_ORDER = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass
class FourierEncoding:
    l: int = 128
    sigma: float = 1.0
    seed: int = 0
    b: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("feature count must be >= 1")
        self.b = self.sigma * Rng(self.seed).normal(self.l * 2).reshape(self.l, 2)

    @property
    def dim(self) -> int:
        return 2 * self.l

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return encode(self, points)


def encode(enc: FourierEncoding, points: np.ndarray) -> np.ndarray:
    """[cos(2 pi B p), sin(2 pi B p)] per row, cos block first."""
    proj = 2.0 * np.pi * (np.asarray(points, dtype=np.float64) @ enc.b.T)
    return np.concatenate([np.cos(proj), np.sin(proj)], axis=1)


def param_shapes(l: int) -> dict[str, tuple[int, ...]]:
    return {
        "w1": (HIDDEN, 2 * l), "b1": (HIDDEN,),
        "w2": (HIDDEN, HIDDEN), "b2": (HIDDEN,),
        "w3": (1, HIDDEN), "b3": (1,),
    }


def init_mlp(l: int, seed: int = 0) -> dict[str, np.ndarray]:
    """Uniform(+-sqrt(6/fan_in)) weights drawn in order w1, w2, w3; zero biases."""
    if l < 1:
        raise ValueError("feature count must be >= 1")
    rng = Rng(seed)
    params = {}
    for name, shape in param_shapes(l).items():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
            continue
        bound = np.sqrt(6.0 / shape[1])
        u = rng.uniform(int(np.prod(shape))).reshape(shape)
        params[name] = bound * (2.0 * u - 1.0)
    return {k: params[k] for k in PARAM_ORDER}


def sigmoid(z):
    # split by sign so large |z| never overflows exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Cache:
    features: np.ndarray
    a1: np.ndarray
    z1: np.ndarray
    a2: np.ndarray
    z2: np.ndarray
    out: np.ndarray
    params: dict


def mlp_forward(params: dict, features: np.ndarray) -> tuple[np.ndarray, Cache]:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != params["w1"].shape[1]:
        raise DimensionError(f"features must be (n, {params['w1'].shape[1]}), got {f.shape}")
    a1 = f @ params["w1"].T + params["b1"]
    z1 = np.maximum(a1, 0.0)
    a2 = z1 @ params["w2"].T + params["b2"]
    z2 = np.maximum(a2, 0.0)
    a3 = z2 @ params["w3"].T + params["b3"]
    out = sigmoid(a3[:, 0])
    return out, Cache(f, a1, z1, a2, z2, out, params)


def mlp_backward(cache: Cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    g = np.asarray(grad_out, dtype=np.float64).ravel()
    if g.shape[0] != cache.out.shape[0]:
        raise DimensionError("gradient length does not match the cached forward pass")
    p = cache.params
    d3 = (g * cache.out * (1.0 - cache.out))[:, None]
    grads = {"w3": d3.T @ cache.z2, "b3": d3.sum(axis=0)}
    d2 = (d3 @ p["w3"]) * (cache.a2 > 0)
    grads["w2"] = d2.T @ cache.z1
    grads["b2"] = d2.sum(axis=0)
    d1 = (d2 @ p["w2"]) * (cache.a1 > 0)
    grads["w1"] = d1.T @ cache.features
    grads["b1"] = d1.sum(axis=0)
    return {k: grads[k] for k in PARAM_ORDER}


class Adam:
    """Adam with bias correction; ``m`` and ``v`` mirror the parameter dict."""

    def __init__(self, params: dict, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for k in params:
            gk = grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * gk
            v *= b2
            v += (1.0 - b2) * (gk * gk)
            params[k] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(state: Adam, params: dict, grads: dict) -> tuple[dict, Adam]:
    state.step(params, grads)
    return params, state


def flatten(params: dict) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in PARAM_ORDER])


def unflatten(theta: np.ndarray, l: int) -> dict[str, np.ndarray]:
    out, pos = {}, 0
    for name, shape in param_shapes(l).items():
        size = int(np.prod(shape))
        out[name] = np.array(theta[pos:pos + size]).reshape(shape)
        pos += size
    return out


def save_checkpoint(path, params: dict) -> None:
    l = params["w1"].shape[1] // 2
    Path(path).write_bytes(f"PMW1\n{l}\n".encode("ascii") + flatten(params).astype("<f4").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if not data.startswith(b"PMW1\n"):
        raise BadMagicError(f"{path}: not a PMW1 checkpoint")
    end = data.find(b"\n", 5)
    if end < 0:
        raise TruncatedError(f"{path}: header line missing")
    l = int(data[5:end])
    body = data[end + 1:]
    count = sum(int(np.prod(s)) for s in param_shapes(l).values())
    if len(body) != 4 * count:
        raise TruncatedError(f"{path}: expected {4 * count} payload bytes, got {len(body)}")
    return unflatten(np.frombuffer(body, dtype="<f4").astype(np.float64), l)
