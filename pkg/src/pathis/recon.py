"""Reconstruction drivers: UBP, time reversal, model-based TV, and HIS."""
from __future__ import annotations

import csv
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import inr, kernels
from .core import ConfigError, Image, ImagingGrid, NumericError, SensorArray, SensorData, TimeConfig
from .forward import ForwardOperator, operator_norm_estimate, time_derivative
from .wave import FdtdConfig, time_reversal

# ---------------------------------------------------------------------------
# universal back-projection


def reconstruct_ubp(y: SensorData, grid: ImagingGrid, sensors: SensorArray, time: TimeConfig,
                    clip: bool = True) -> Image:
    """Back-project b(t) = 2 p(t) - 2 t dp/dt along each sensor's arrival circles."""
    if y.k != sensors.k or y.m != time.m_samples:
        raise ConfigError(f"data is {y.k}x{y.m}, geometry expects {sensors.k}x{time.m_samples}")
    if not math.isclose(y.dt_s, time.dt_s, rel_tol=1e-6):
        raise ConfigError("sensor data dt does not match the time axis")
    p = y.values
    b = 2.0 * p - 2.0 * time.times * time_derivative(p, time.dt_s)
    centers = grid.pixel_centers()
    x = kernels.gather(
        np.ascontiguousarray(b),
        np.ascontiguousarray(sensors.positions, dtype=np.float64),
        np.ascontiguousarray(centers[:, 0]),
        np.ascontiguousarray(centers[:, 1]),
        1.0 / (time.c_mps * time.dt_s),
    ) / sensors.k
    if clip:
        np.maximum(x, 0.0, out=x)
    return Image(grid, x)


def reconstruct_tr(y: SensorData, grid: ImagingGrid, sensors: SensorArray, cfg: FdtdConfig | None = None,
                   clip: bool = True) -> Image:
    return time_reversal(y, grid, sensors, cfg or FdtdConfig(c_mps=y.c_mps), clip=clip)


# ---------------------------------------------------------------------------
# model-based


@dataclass
class MbConfig:
    """Projected gradient descent on ||Ax - y||^2 + lam * TV_eps(x).

    ``lam`` and ``eps_tv`` act on the normalized problem in which the
    operator has unit norm and the first back-projection peaks at 1, so
    they do not depend on the physical units of A or y.
    """

    lam: float = 0.02
    eps_tv: float = 0.05
    iters: int = 200
    step_safety: float = 0.9
    norm_iters: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        if self.eps_tv <= 0:
            raise ConfigError("eps_tv must be > 0")


def tv_value_grad(z: np.ndarray, eps: float) -> tuple[float, np.ndarray]:
    """Smoothed isotropic TV with forward differences (zero past the last row/column)."""
    gh = np.zeros_like(z)
    gv = np.zeros_like(z)
    gh[:-1, :] = z[1:, :] - z[:-1, :]
    gv[:, :-1] = z[:, 1:] - z[:, :-1]
    mag = np.sqrt(gh * gh + gv * gv + eps * eps)
    ph, pv = gh / mag, gv / mag
    grad = -ph - pv
    grad[1:, :] += ph[:-1, :]
    grad[:, 1:] += pv[:, :-1]
    return float(mag.sum()), grad


@dataclass
class MbResult:
    image: Image
    fidelity: list[float] = field(default_factory=list)
    step: float = 0.0


def reconstruct_mb(y: SensorData, op: ForwardOperator, cfg: MbConfig = MbConfig()) -> MbResult:
    op.check_data(y)
    n = op.grid.n
    yv = y.values.ravel()
    if not np.any(yv):
        return MbResult(Image.zeros(op.grid), [0.0] * (cfg.iters + 1), 0.0)
    norm = operator_norm_estimate(op, cfg.norm_iters, cfg.seed)
    if not math.isfinite(norm) or norm <= 0:
        raise NumericError(f"operator norm estimate is {norm}")
    back = op.apply_adjoint(yv)
    scale = float(np.abs(back).max()) / norm ** 2
    # z = x / scale,  A_hat = A / norm,  y_hat = y / (norm * scale)
    to_orig = (norm * scale) ** 2
    y_hat = yv / (norm * scale)
    eta = cfg.step_safety / (2.0 + 8.0 * cfg.lam / cfg.eps_tv)
    z = np.zeros(n * n)
    fid = []
    for _ in range(cfg.iters):
        res = op.apply(z) / norm - y_hat.reshape(op.sensors.k, -1)
        fid.append(float(np.sum(res * res)) * to_orig)
        grad = 2.0 * op.apply_adjoint(res) / norm
        if cfg.lam > 0:
            _, gtv = tv_value_grad(z.reshape(n, n), cfg.eps_tv)
            grad += cfg.lam * gtv.ravel()
        z = np.maximum(z - eta * grad, 0.0)
        if not np.all(np.isfinite(z)):
            raise NumericError("model-based iteration diverged")
    res = op.apply(z) / norm - y_hat.reshape(op.sensors.k, -1)
    fid.append(float(np.sum(res * res)) * to_orig)
    return MbResult(Image(op.grid, z * scale), fid, eta)


# ---------------------------------------------------------------------------
# HIS: coordinate network fit through the forward operator


@dataclass
class HisConfig:
    epochs: int = 10000
    lr: float = 1e-4
    l: int = 128
    sigma: float = 1.0
    seed: int = 0
    gain_mode: str = "off"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.gain_mode not in ("off", "auto"):
            raise ConfigError(f"gain_mode must be 'off' or 'auto', got {self.gain_mode!r}")


@dataclass
class TrainLog:
    loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    seed: int = 0

    def __len__(self):
        return len(self.loss)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "seconds"])
            for i, (lo, sec) in enumerate(zip(self.loss, self.seconds)):
                w.writerow([i, repr(lo), f"{sec:.6f}"])


def normalized_coords(n: int) -> np.ndarray:
    """Pixel (i, j) -> (2i/(n-1) - 1, 2j/(n-1) - 1), row-major."""
    a = 2.0 * np.arange(n) / (n - 1) - 1.0
    ii, jj = np.meshgrid(a, a, indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


def reconstruct_his(y: SensorData, op: ForwardOperator, cfg: HisConfig = HisConfig(),
                    callback=None) -> tuple[Image, TrainLog]:
    """Fit f_theta so that A f_theta(coords) matches y in mean squared error.

    The encoding draws from ``seed`` and the network from ``seed + 1``.
    ``callback(epoch, loss, params)`` is called after every epoch.
    """
    op.check_data(y)
    yv = y.values
    km = yv.size
    enc = inr.FourierEncoding(cfg.l, cfg.sigma, cfg.seed)
    feats = enc(normalized_coords(op.grid.n))
    params = inr.init_mlp(cfg.l, cfg.seed + 1)
    opt = inr.Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    log = TrainLog(seed=cfg.seed)
    out = None
    for epoch in range(cfg.epochs):
        t0 = _time.perf_counter()
        out, cache = inr.mlp_forward(params, feats)
        pred = op.apply(out)
        gain = 1.0
        if cfg.gain_mode == "auto":
            pp = float(np.sum(pred * pred))
            gain = float(np.sum(pred * yv)) / pp if pp > 0 else 1.0
        res = gain * pred - yv
        loss = float(np.mean(res * res))
        if not math.isfinite(loss):
            raise NumericError(f"HIS loss became non-finite at epoch {epoch}")
        # d loss / d gain vanishes at the least-squares gain, leaving gain * A^T
        grad_img = op.apply_adjoint(res * (2.0 * gain / km))
        opt.step(params, inr.mlp_backward(cache, grad_img))
        log.loss.append(loss)
        log.seconds.append(_time.perf_counter() - t0)
        if callback is not None:
            callback(epoch, loss, params)
    out, _ = inr.mlp_forward(params, feats)
    return Image(op.grid, out), log
