"""Matrix-free time-of-flight forward operator and its exact transpose.

Both kernels share the form  p = d/dt [ G * S ](t), where

    S(tau) = integral p0(r') delta(tau - |r - r'|/c) dr'

is the arrival-time density seen by one sensor. Three linear stages:

1. splat:  each pixel's value is linearly split between the two time bins
   straddling its fractional arrival index u = |r_i - p_j| / (c dt), so
   q[m] is S sampled on the hat basis (pixel area h^2 folded in below).
2. kernel: ``"spherical"`` uses the 3-D shell kernel 1/(4 pi c^2) * 1/(c t):
   g[m] = kappa * q[m] / t_m, t_m = m dt, g[0] = 0,
   kappa = h^2 / (4 pi c^3 dt).
   ``"cylindrical"`` uses the 2-D Green's function 1/(2 pi c^2) / sqrt(t^2 - tau^2):
   g[m] = kappa2 * sum_m' K[m, m'] q[m'], kappa2 = h^2 / (2 pi c^2 dt),
   K[m, m'] = integral of hat(s - m') / sqrt(m^2 - s^2) over 0 <= s < m,
   evaluated in closed form. In both, 1/dt converts unit bin mass into
   density per second.
3. d/dt:   central differences inside, one-sided at both ends, divided by dt.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .core import (
    ConfigError,
    DimensionError,
    GeometryError,
    Image,
    ImagingGrid,
    NumericError,
    Rng,
    SensorArray,
    SensorData,
    TimeConfig,
)


def time_derivative(g: np.ndarray, dt: float) -> np.ndarray:
    """Row-wise d/dt: central inside, one-sided at the two ends."""
    y = np.empty_like(g)
    y[..., 1:-1] = (g[..., 2:] - g[..., :-2]) * 0.5
    y[..., 0] = g[..., 1] - g[..., 0]
    y[..., -1] = g[..., -1] - g[..., -2]
    return y / dt


def time_derivative_adjoint(y: np.ndarray, dt: float) -> np.ndarray:
    g = np.zeros_like(y)
    half = y[..., 1:-1] * 0.5
    g[..., :-2] -= half
    g[..., 2:] += half
    g[..., 0] -= y[..., 0]
    g[..., 1] += y[..., 0]
    g[..., -2] -= y[..., -1]
    g[..., -1] += y[..., -1]
    return g / dt


def cylindrical_kernel(m_samples: int) -> np.ndarray:
    """Dimensionless (M, M) matrix K[m, m'] for the 2-D Green's function.

    Row m integrates the unit hat centred on m' against 1/sqrt(m^2 - s^2)
    over s in [0, m); row 0 is zero. Uses the antiderivatives
    arcsin(s/m) and -sqrt(m^2 - s^2).
    """
    mm = np.arange(m_samples, dtype=np.float64)[:, None]
    cc = np.arange(m_samples, dtype=np.float64)[None, :]
    safe = np.where(mm > 0, mm, 1.0)

    def prim(s):
        s = np.clip(s, 0.0, mm)
        ratio = np.clip(s / safe, -1.0, 1.0)
        return np.arcsin(ratio), -np.sqrt(np.maximum(mm * mm - s * s, 0.0))

    a0, a1 = prim(cc - 1.0)
    b0, b1 = prim(cc)
    c0, c1 = prim(cc + 1.0)
    left = (b1 - a1) - (cc - 1.0) * (b0 - a0)
    right = (cc + 1.0) * (c0 - b0) - (c1 - b1)
    k = left + right
    k[0] = 0.0
    return k


KERNELS = ("cylindrical", "spherical")


class ForwardOperator:
    """y = A x for one grid / sensor arc / time axis.

    ``scale`` multiplies the whole operator; it exists so that homogeneity
    can be checked and is 1 for every physical use.
    """

    def __init__(self, grid: ImagingGrid, sensors: SensorArray, time: TimeConfig,
                 kernel: str = "cylindrical", scale: float = 1.0):
        if kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
        self.grid = grid
        self.sensors = sensors
        self.time = time
        self.kernel = kernel
        self.scale = float(scale)
        c, dt = time.c_mps, time.dt_s
        self.inv_cdt = 1.0 / (c * dt)
        centers = grid.pixel_centers()
        self._px = np.ascontiguousarray(centers[:, 0])
        self._py = np.ascontiguousarray(centers[:, 1])
        self._sens = np.ascontiguousarray(sensors.positions, dtype=np.float64)

        if kernel == "spherical":
            self.kappa = grid.h ** 2 / (4.0 * math.pi * c ** 3 * dt)
            t = time.times
            w = np.zeros_like(t)
            w[1:] = self.kappa / t[1:]  # t = 0 bin held at zero
            self._diag = w * self.scale
            self._kmat = None
        else:
            self.kappa = grid.h ** 2 / (2.0 * math.pi * c ** 2 * dt)
            self._diag = None
            self._kmat = cylindrical_kernel(time.m_samples) * (self.kappa * self.scale)

        far = 0.0
        if sensors.k:
            d = np.sqrt((self._px[None, :] - self._sens[:, 0:1]) ** 2
                        + (self._py[None, :] - self._sens[:, 1:2]) ** 2)
            far = float(d.max())
        if math.floor(far * self.inv_cdt) + 1 >= time.m_samples:
            raise GeometryError(
                f"{time.m_samples} samples do not cover the farthest pixel "
                f"(needs > {math.floor(far * self.inv_cdt) + 1})"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.sensors.k * self.time.m_samples, self.grid.n ** 2

    def scaled(self, factor: float) -> "ForwardOperator":
        return ForwardOperator(self.grid, self.sensors, self.time, self.kernel, self.scale * factor)

    def _kernel_apply(self, q):
        if self._kmat is None:
            return q * self._diag
        return q @ self._kmat.T

    def _kernel_adjoint(self, g):
        if self._kmat is None:
            return g * self._diag
        return g @ self._kmat

    # raw ndarray entry points, used in the training loops
    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64).ravel()
        if x.size != self.grid.n ** 2:
            raise DimensionError(f"expected {self.grid.n ** 2} pixels, got {x.size}")
        q = kernels.splat(x, self._sens, self._px, self._py, self.inv_cdt, self.time.m_samples)
        return time_derivative(self._kernel_apply(q), self.time.dt_s)

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.size != self.sensors.k * self.time.m_samples:
            raise DimensionError(f"expected {self.sensors.k}x{self.time.m_samples} samples, got {y.size}")
        y = y.reshape(self.sensors.k, self.time.m_samples)
        z = np.ascontiguousarray(self._kernel_adjoint(time_derivative_adjoint(y, self.time.dt_s)))
        return kernels.gather(z, self._sens, self._px, self._py, self.inv_cdt)

    def check_data(self, y: SensorData) -> None:
        t = self.time
        if (y.k, y.m) != (self.sensors.k, t.m_samples):
            raise DimensionError(f"data is {y.k}x{y.m}, operator expects {self.sensors.k}x{t.m_samples}")
        if not (math.isclose(y.dt_s, t.dt_s, rel_tol=1e-6) and math.isclose(y.c_mps, t.c_mps, rel_tol=1e-6)):
            raise ConfigError("sensor data dt/c do not match the operator")


def forward(op: ForwardOperator, x: Image) -> SensorData:
    if x.grid != op.grid:
        raise DimensionError("image grid does not match the operator grid")
    t = op.time
    return SensorData(op.sensors.k, t.m_samples, t.dt_s, t.c_mps, op.apply(x.values))


def adjoint(op: ForwardOperator, y: SensorData) -> Image:
    op.check_data(y)
    return Image(op.grid, op.apply_adjoint(y.values))


def operator_norm_estimate(op: ForwardOperator, iters: int = 50, seed: int = 0, history: bool = False):
    """Largest singular value of A by power iteration on A^T A.

    The Rayleigh quotient of A^T A is non-decreasing along power iterates,
    so every step tightens the estimate from below.
    """
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    v = Rng(seed).normal(op.grid.n ** 2)
    v /= np.linalg.norm(v)
    est = []
    for _ in range(iters):
        w = op.apply_adjoint(op.apply(v))
        lam = float(v @ w)
        est.append(math.sqrt(max(lam, 0.0)))
        nw = np.linalg.norm(w)
        if not math.isfinite(nw):
            raise NumericError("power iteration produced a non-finite vector")
        if nw == 0:
            break
        v = w / nw
    return (est[-1], est) if history else est[-1]


def add_noise(y: SensorData, sigma_rel: float, seed: int = 0) -> SensorData:
    """White Gaussian noise with std ``sigma_rel * max|y|``."""
    if sigma_rel <= 0:
        return y
    amp = sigma_rel * float(np.abs(y.values).max())
    noise = Rng(seed).normal(y.values.size).reshape(y.values.shape)
    return y.like(y.values + amp * noise)
