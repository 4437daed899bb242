"""2-D acoustic leapfrog FDTD: forward simulation and time reversal.

Constant sound speed, zero source term, initial pressure p0 and zero
initial velocity. The image grid is embedded in a padded domain whose
outer ``sponge_cells`` ring damps outgoing waves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (
    DEFAULT_C_MPS,
    ConfigError,
    GeometryError,
    Image,
    ImagingGrid,
    SensorArray,
    SensorData,
    TimeConfig,
)

CFL_MAX = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class FdtdConfig:
    pad_cells: int = 64
    cfl: float = 0.5
    sponge_cells: int = 40
    sponge_alpha: float = 0.05
    c_mps: float = DEFAULT_C_MPS
    refine: int = 6
    antialias: bool = True

    def validate(self) -> None:
        if not (0.0 < self.cfl <= CFL_MAX + 1e-15):
            raise ConfigError(f"cfl={self.cfl} violates the 2-D stability bound 1/sqrt(2)")
        if self.sponge_cells >= self.pad_cells:
            raise ConfigError("sponge_cells must be smaller than pad_cells")
        if self.sponge_cells < 0 or self.pad_cells < 0:
            raise ConfigError("cell counts must be non-negative")
        if not (0.0 <= self.sponge_alpha < 1.0):
            raise ConfigError("sponge_alpha must lie in [0, 1)")
        if not (self.c_mps > 0):
            raise ConfigError("speed of sound must be positive")
        if int(self.refine) != self.refine or self.refine < 1:
            raise ConfigError("refine must be a positive integer")

    def dt_sim(self, h: float) -> float:
        """Time step for image pitch ``h`` (the cell pitch is h / refine)."""
        return self.cfl * h / (self.refine * self.c_mps * math.sqrt(2.0))


def sponge_taper(size: int, sponge_cells: int, alpha: float) -> np.ndarray:
    """tau = 1 - alpha*((S - d)/S)^2 within distance d < S of the edge."""
    idx = np.arange(size)
    d1 = np.minimum(idx, size - 1 - idx)
    d = np.minimum(d1[:, None], d1[None, :]).astype(np.float64)
    tau = np.ones((size, size))
    if sponge_cells > 0:
        inside = d < sponge_cells
        tau[inside] = 1.0 - alpha * ((sponge_cells - d[inside]) / sponge_cells) ** 2
    return tau


def hat_matrix(n_pixels: int, coords: np.ndarray) -> np.ndarray:
    """Linear (hat) interpolation weights from pixel values to ``coords``.

    ``coords`` are positions in pixel-index units; weights vanish one
    pixel beyond the outermost centres.
    """
    i = np.arange(n_pixels)
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(coords)[:, None] - i[None, :]))


class Domain:
    """Padded simulation domain around an imaging grid.

    ``pad_cells`` and ``sponge_cells`` count image pixels; with ``refine`` r
    the cell pitch is h / r. The image is carried onto the cells by bilinear
    (hat) interpolation between pixel centres, which is the identity at r = 1.
    """

    def __init__(self, grid: ImagingGrid, cfg: FdtdConfig):
        cfg.validate()
        self.grid = grid
        self.cfg = cfg
        r = self.r = int(cfg.refine)
        self.h = grid.h / r
        self.pad = cfg.pad_cells * r
        self.size = (grid.n + 2 * cfg.pad_cells) * r
        self.dt = cfg.dt_sim(grid.h)
        self.coef = (cfg.c_mps * self.dt / self.h) ** 2
        self.taper = sponge_taper(self.size, cfg.sponge_cells * r, cfg.sponge_alpha)
        pix = (np.arange(self.size) - (self.size - 1) / 2.0) / r + (grid.n - 1) / 2.0
        self._interp = hat_matrix(grid.n, pix)

    def node_index(self, points: np.ndarray) -> np.ndarray:
        """Flat index of the nearest simulation node for each (x, y) point."""
        ij = np.rint(np.asarray(points) / self.h + (self.size - 1) / 2.0).astype(np.int64)
        if ij.size and (ij.min() < 0 or ij.max() >= self.size):
            raise GeometryError("sensor lies outside the padded simulation domain")
        return ij[:, 0] * self.size + ij[:, 1]

    def embed(self, values: np.ndarray) -> np.ndarray:
        n = self.grid.n
        img = np.asarray(values, dtype=np.float64).reshape(n, n)
        u = self._interp
        return u @ img @ u.T

    def crop(self, field: np.ndarray) -> np.ndarray:
        """Image-grid values: hat-weighted average of the cells around each pixel."""
        u = self._interp
        w = u.sum(axis=0)
        return (u.T @ field @ u) / np.outer(w, w)

    def start(self, p0: np.ndarray):
        """Fields at steps 0 and 1 for zero initial velocity."""
        p1 = p0 + 0.5 * self.coef * kernels.laplacian(p0)
        return p0 * self.taper, p1 * self.taper

    def n_steps(self, duration_s: float) -> int:
        return math.ceil(duration_s / self.dt - 1e-9)


def simulate(p0: np.ndarray, domain: Domain, nsteps: int, rec_nodes: np.ndarray) -> np.ndarray:
    """Traces at ``rec_nodes`` for steps 0..nsteps (inclusive), shape (nsteps+1, nrec)."""
    prev, cur = domain.start(p0)
    rec = np.empty((nsteps + 1, len(rec_nodes)))
    rec[0] = p0.flat[rec_nodes]
    if nsteps >= 1:
        rec[1] = cur.flat[rec_nodes]
    if nsteps >= 2:
        rec[2:], _, _ = kernels.leapfrog(prev, cur, domain.coef, domain.taper, nsteps - 1, rec_nodes)
    return rec


def fdtd_forward(x: Image, sensors: SensorArray, time: TimeConfig, cfg: FdtdConfig = FdtdConfig()) -> SensorData:
    if not math.isclose(time.c_mps, cfg.c_mps, rel_tol=1e-9):
        raise ConfigError("time config and FDTD config disagree on the speed of sound")
    dom = Domain(x.grid, cfg)
    nodes = dom.node_index(sensors.positions)
    duration = (time.m_samples - 1) * time.dt_s
    nsteps = dom.n_steps(duration)
    rec = simulate(dom.embed(x.values), dom, nsteps, nodes)
    t_sim = np.arange(nsteps + 1) * dom.dt
    if cfg.antialias:
        traces = (resample_weights(t_sim, time.times, time.dt_s) @ rec).T
    else:
        traces = np.stack([np.interp(time.times, t_sim, rec[:, i]) for i in range(sensors.k)])
    return SensorData(sensors.k, time.m_samples, time.dt_s, time.c_mps, traces)


def resample_weights(t_in: np.ndarray, t_out: np.ndarray, width: float) -> np.ndarray:
    """Rows of triangle weights (half-width ``width``) normalized to sum 1.

    Averaging the fine trace with a triangle one output interval wide before
    decimating keeps the dispersive grid-scale ringing from aliasing.
    """
    w = np.maximum(0.0, 1.0 - np.abs(t_out[:, None] - t_in[None, :]) / width)
    total = w.sum(axis=1, keepdims=True)
    total[total == 0] = 1.0
    return w / total


def time_reversal(y: SensorData, grid: ImagingGrid, sensors: SensorArray, cfg: FdtdConfig = FdtdConfig(),
                  clip: bool = True) -> Image:
    """Re-emit the time-reversed traces as Dirichlet values at the sensor nodes."""
    if y.k != sensors.k:
        raise ConfigError(f"data has {y.k} traces, array has {sensors.k} sensors")
    if not math.isclose(y.c_mps, cfg.c_mps, rel_tol=1e-9):
        raise ConfigError("sensor data and FDTD config disagree on the speed of sound")
    dom = Domain(grid, cfg)
    nodes = dom.node_index(sensors.positions)
    duration = (y.m - 1) * y.dt_s
    nsteps = dom.n_steps(duration)
    t_data = np.arange(y.m) * y.dt_s
    t_rev = np.maximum(duration - np.arange(nsteps + 1) * dom.dt, 0.0)
    drive = np.empty((nsteps + 1, sensors.k))
    for i in range(sensors.k):
        drive[:, i] = np.interp(t_rev, t_data, y.values[i], left=0.0, right=0.0)
    prev = np.zeros((dom.size, dom.size))
    cur = np.zeros_like(prev)
    prev.flat[nodes] = drive[0]
    if nsteps >= 1:
        cur.flat[nodes] = drive[1]
        _, _, cur = kernels.leapfrog(prev, cur, dom.coef, dom.taper, nsteps - 1, nodes[:0],
                                     nodes, drive[2:])
    else:
        cur = prev
    out = dom.crop(cur).ravel().copy()
    if clip:
        np.maximum(out, 0.0, out=out)
    return Image(grid, out)
