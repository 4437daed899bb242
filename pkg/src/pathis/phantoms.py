"""Seeded procedural phantoms and image ingestion."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    DEFAULT_EXTENT_M,
    ConfigError,
    FormatError,
    Image,
    Rng,
    make_grid,
    minmax,
    read_image,
    read_pgm,
)

KINDS = ("geometric", "disks", "vascular")
FRAME = 2


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "geometric"
    seed: int = 0
    n: int = 64
    complexity: int = 3
    extent_m: float = DEFAULT_EXTENT_M

    def name(self) -> str:
        return f"{self.kind}-s{self.seed}-c{self.complexity}"


def _coverage(signed_dist: np.ndarray) -> np.ndarray:
    """Anti-aliased inside fraction from a signed distance in pixels."""
    return np.clip(0.5 - signed_dist, 0.0, 1.0)


def _pixel_coords(n: int):
    a = np.arange(n, dtype=np.float64)
    return np.meshgrid(a, a, indexing="ij")


def _inner_box(n: int):
    # inner 80 % of the field, also clear of the zero frame
    lo = max(0.1 * (n - 1), FRAME + 1.0)
    return lo, (n - 1) - lo


def _disk(ii, jj, ci, cj, r):
    return _coverage(np.hypot(ii - ci, jj - cj) - r)


def _ring(ii, jj, ci, cj, r, width):
    return _coverage(np.abs(np.hypot(ii - ci, jj - cj) - r) - width / 2.0)


def _round_shapes(spec: PhantomSpec, rings: bool) -> np.ndarray:
    n = spec.n
    rng = Rng(spec.seed)
    ii, jj = _pixel_coords(n)
    lo, hi = _inner_box(n)
    img = np.zeros((n, n))
    rmin, rmax = max(1.5, 0.04 * n), max(2.0, 0.14 * n)
    for s in range(spec.complexity):
        r = rmin + (rmax - rmin) * rng.uniform()
        ci = lo + r + (hi - lo - 2 * r) * rng.uniform()
        cj = lo + r + (hi - lo - 2 * r) * rng.uniform()
        amp = 0.5 + 0.5 * rng.uniform()
        if rings and s % 2 == 1:
            shape = _ring(ii, jj, ci, cj, r, max(1.0, 0.25 * r))
        else:
            shape = _disk(ii, jj, ci, cj, r)
        img = np.maximum(img, amp * shape)
    return img


def _segment_distance(ii, jj, a, b):
    d = b - a
    length2 = float(d @ d)
    if length2 == 0:
        return np.hypot(ii - a[0], jj - a[1])
    t = np.clip(((ii - a[0]) * d[0] + (jj - a[1]) * d[1]) / length2, 0.0, 1.0)
    return np.hypot(ii - (a[0] + t * d[0]), jj - (a[1] + t * d[1]))


def _vascular(spec: PhantomSpec) -> np.ndarray:
    n = spec.n
    rng = Rng(spec.seed)
    ii, jj = _pixel_coords(n)
    lo, hi = _inner_box(n)
    span = hi - lo
    img = np.zeros((n, n))

    def clamp(p):
        return np.clip(p, lo, hi)

    start = np.array([hi, lo + span * (0.3 + 0.4 * rng.uniform())])
    heading = math.pi + (rng.uniform() - 0.5) * math.radians(40)  # towards smaller i
    width = max(1.5, 0.05 * n)
    length = span * (0.3 + 0.1 * rng.uniform())
    stack = [(start, heading, width, length, 0)]
    while stack:
        p, ang, w, ln, depth = stack.pop()
        q = clamp(p + ln * np.array([math.cos(ang), math.sin(ang)]))
        amp = 0.7 + 0.3 * rng.uniform()
        dist = _segment_distance(ii, jj, p, q)
        img = np.maximum(img, amp * _coverage(dist - w / 2.0))
        if depth + 1 >= spec.complexity:
            continue
        for side in (-1.0, 1.0):
            jitter = (2.0 * rng.uniform() - 1.0) * math.radians(30)
            stack.append((q, ang + side * math.radians(30) + jitter,
                          max(1.5, 0.7 * w), 0.75 * ln, depth + 1))
    return img


def generate(spec: PhantomSpec) -> Image:
    if spec.kind not in KINDS:
        raise ConfigError(f"unknown phantom kind {spec.kind!r}; choose from {KINDS}")
    if spec.n < 16:
        raise ConfigError(f"phantoms need n >= 16, got {spec.n}")
    if spec.complexity < 1:
        raise ConfigError("complexity must be >= 1")
    if spec.kind == "vascular":
        img = _vascular(spec)
    else:
        img = _round_shapes(spec, rings=spec.kind == "geometric")
    img = np.clip(img, 0.0, 1.0)
    img[:FRAME, :] = img[-FRAME:, :] = 0.0
    img[:, :FRAME] = img[:, -FRAME:] = 0.0
    return Image(make_grid(spec.n, spec.extent_m), img.ravel())


def from_file(path, extent_m: float = DEFAULT_EXTENT_M) -> Image:
    """Load a .paf or binary PGM and min-max rescale it to [0, 1]."""
    path = Path(path)
    head = path.read_bytes()[:4]
    if head == b"PAF1":
        im = read_image(path)
        return Image(im.grid, minmax(im.values))
    if head[:2] == b"P5":
        arr = read_pgm(path)
        if arr.shape[0] != arr.shape[1]:
            raise FormatError(f"{path}: image must be square, got {arr.shape}")
        return Image(make_grid(arr.shape[0], extent_m), minmax(arr).ravel())
    raise FormatError(f"{path}: unsupported image format")
