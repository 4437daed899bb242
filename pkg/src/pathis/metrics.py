"""PSNR and SSIM on independently min-max normalized images."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, Image, minmax

PSNR_CAP_DB = 99.0
WINDOW = 11
WINDOW_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


@dataclass(frozen=True)
class MetricsReport:
    psnr_db: float
    ssim: float


def _pair(a, b):
    if isinstance(a, Image) and isinstance(b, Image) and a.grid.n != b.grid.n:
        raise DimensionError(f"grid mismatch: {a.grid.n} vs {b.grid.n}")
    va = a.array if isinstance(a, Image) else np.asarray(a, dtype=np.float64)
    vb = b.array if isinstance(b, Image) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionError(f"shape mismatch: {va.shape} vs {vb.shape}")
    return minmax(va), minmax(vb)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB with unit peak, capped at 99 dB."""
    na, nb = _pair(a, b)
    mse = float(np.mean((na - nb) ** 2))
    if mse <= 0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = WINDOW, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, w1d: np.ndarray) -> np.ndarray:
    # separable 'valid' correlation
    k = w1d.size
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ w1d
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ w1d


def ssim(a, b) -> float:
    """Mean SSIM over all valid 11x11 Gaussian windows."""
    na, nb = _pair(a, b)
    if min(na.shape) < WINDOW:
        raise DimensionError(f"image smaller than the {WINDOW}x{WINDOW} SSIM window")
    r = np.arange(WINDOW) - (WINDOW - 1) / 2.0
    w = np.exp(-(r ** 2) / (2.0 * WINDOW_SIGMA ** 2))
    w /= w.sum()
    mu_a = _filter_valid(na, w)
    mu_b = _filter_valid(nb, w)
    saa = _filter_valid(na * na, w) - mu_a ** 2
    sbb = _filter_valid(nb * nb, w) - mu_b ** 2
    sab = _filter_valid(na * nb, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * sab + C2)
    den = (mu_a ** 2 + mu_b ** 2 + C1) * (saa + sbb + C2)
    return float(np.mean(num / den))


def evaluate(a, b) -> MetricsReport:
    return MetricsReport(psnr(a, b), ssim(a, b))
