"""Domain types, seeded RNG, config parsing and the binary file formats.

All arithmetic is float64. Payloads on disk are little-endian float32.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_C_MPS = 1500.0
DEFAULT_RADIUS_M = 0.022
DEFAULT_EXTENT_M = 0.05
MEDIUM_DENSITY_KGM3 = 1000.0  # metadata only; constant-density wave equation


class PathisError(Exception):
    """Base class; ``exit_code`` is what the CLI returns."""

    exit_code = 1


class ConfigError(PathisError, ValueError):
    exit_code = 1


class GeometryError(PathisError, ValueError):
    exit_code = 1


class NumericError(PathisError, ArithmeticError):
    exit_code = 3


class FormatError(PathisError, OSError):
    exit_code = 2


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class DimensionError(FormatError):
    pass


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class ImagingGrid:
    n: int
    extent_m: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"grid size must be an integer >= 2, got {self.n}")
        if not (self.extent_m > 0) or not math.isfinite(self.extent_m):
            raise ConfigError(f"grid extent must be positive, got {self.extent_m}")

    @property
    def h(self) -> float:
        return self.extent_m / self.n

    def axis(self) -> np.ndarray:
        """Pixel-center coordinates along one axis, centered on the origin."""
        return (np.arange(self.n) - (self.n - 1) / 2.0) * self.h

    def pixel_centers(self) -> np.ndarray:
        """(n*n, 2) array of (x, y); row index i maps to x, column j to y."""
        a = self.axis()
        xx, yy = np.meshgrid(a, a, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)


def make_grid(n: int, extent_m: float) -> ImagingGrid:
    return ImagingGrid(n, float(extent_m))


@dataclass(frozen=True)
class SensorArray:
    k: int
    radius_m: float
    span_deg: float
    center_deg: float = 90.0
    positions: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"sensor count must be >= 1, got {self.k}")
        if not (0.0 < self.span_deg <= 360.0):
            raise ConfigError(f"span must lie in (0, 360], got {self.span_deg}")
        if not (self.radius_m >= 0):
            raise ConfigError(f"radius must be non-negative, got {self.radius_m}")
        theta = np.deg2rad(self.angles_deg())
        pos = self.radius_m * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def angles_deg(self) -> np.ndarray:
        # cell-centered: span=360 never places two sensors at the same bearing
        i = np.arange(self.k)
        return self.center_deg - self.span_deg / 2.0 + (i + 0.5) * self.span_deg / self.k

    def subset(self, order) -> "SensorArray":
        """Same array with positions permuted (used for reordering tests)."""
        out = SensorArray(self.k, self.radius_m, self.span_deg, self.center_deg)
        pos = np.asarray(self.positions)[np.asarray(order)].copy()
        pos.setflags(write=False)
        object.__setattr__(out, "positions", pos)
        return out


def make_sensor_arc(k: int, radius_m: float, span_deg: float, center_deg: float = 90.0) -> SensorArray:
    return SensorArray(int(k), float(radius_m), float(span_deg), float(center_deg))


@dataclass(frozen=True)
class TimeConfig:
    dt_s: float
    m_samples: int
    c_mps: float

    def __post_init__(self):
        if not (self.dt_s > 0):
            raise ConfigError(f"dt must be positive, got {self.dt_s}")
        if not (self.c_mps > 0):
            raise ConfigError(f"speed of sound must be positive, got {self.c_mps}")
        if int(self.m_samples) != self.m_samples or self.m_samples < 2:
            raise ConfigError(f"need at least 2 samples, got {self.m_samples}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m_samples) * self.dt_s

    def covers(self, grid: ImagingGrid, sensors: SensorArray) -> bool:
        reach = self.c_mps * self.dt_s * (self.m_samples - 1)
        return reach >= sensors.radius_m + math.sqrt(2) / 2 * grid.extent_m


def default_time_config(grid: ImagingGrid, sensors: SensorArray, c_mps: float = DEFAULT_C_MPS) -> TimeConfig:
    """Two samples per pixel transit, long enough to hear the farthest pixel."""
    dt = grid.h / (2.0 * c_mps)
    far = sensors.radius_m + math.sqrt(2) / 2 * grid.extent_m
    m = math.ceil(far / (c_mps * dt)) + 4
    return TimeConfig(dt, m, float(c_mps))


# ---------------------------------------------------------------------------
# data containers


@dataclass
class Image:
    grid: ImagingGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size != self.grid.n ** 2:
            raise DimensionError(f"image needs {self.grid.n ** 2} values, got {v.size}")
        self.values = v

    @property
    def array(self) -> np.ndarray:
        """(n, n) view, axis 0 is x."""
        return self.values.reshape(self.grid.n, self.grid.n)

    @classmethod
    def zeros(cls, grid: ImagingGrid) -> "Image":
        return cls(grid, np.zeros(grid.n ** 2))


@dataclass
class SensorData:
    k: int
    m: int
    dt_s: float
    c_mps: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size != self.k * self.m:
            raise DimensionError(f"sensor data needs {self.k}x{self.m} values, got {v.size}")
        self.values = v.reshape(self.k, self.m)

    @classmethod
    def zeros(cls, k: int, time: TimeConfig) -> "SensorData":
        return cls(k, time.m_samples, time.dt_s, time.c_mps, np.zeros((k, time.m_samples)))

    def like(self, values) -> "SensorData":
        return SensorData(self.k, self.m, self.dt_s, self.c_mps, values)

    def time_config(self) -> TimeConfig:
        return TimeConfig(self.dt_s, self.m, self.c_mps)


# ---------------------------------------------------------------------------
# RNG

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class Rng:
    """splitmix64 with Box-Muller normals.

    Uniforms are the top 53 bits scaled into [0, 1). Each normal pair
    consumes two consecutive uniforms (u1, u2) and yields
    r*cos(2*pi*u2) then r*sin(2*pi*u2) with r = sqrt(-2 ln(1 - u1)).
    """

    def __init__(self, seed: int = 0):
        self.state = int(seed) & _MASK

    def next_u64(self, size: int | None = None):
        count = 1 if size is None else int(size)
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            out = _mix(states)
        self.state = (self.state + count * _GAMMA) & _MASK
        return int(out[0]) if size is None else out

    def uniform(self, size: int | None = None):
        raw = self.next_u64(1 if size is None else size)
        u = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return float(u[0]) if size is None else u

    def normal(self, size: int) -> np.ndarray:
        pairs = (int(size) + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        ang = 2.0 * np.pi * u[:, 1]
        out = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1).ravel()
        return out[:size]


# ---------------------------------------------------------------------------
# key = value config files


def read_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# binary formats

_F32 = np.dtype("<f4")


def _read_header(path, magic: bytes, nfields: int):
    data = Path(path).read_bytes()
    if not data.startswith(magic):
        raise BadMagicError(f"{path}: bad magic {data[:len(magic)]!r}, expected {magic!r}")
    end = data.find(b"\n", len(magic))
    if end < 0:
        raise TruncatedError(f"{path}: header line missing")
    fields = data[len(magic):end].split()
    if len(fields) != nfields:
        raise FormatError(f"{path}: header needs {nfields} fields, got {len(fields)}")
    return fields, data[end + 1:]


def _payload(path, body: bytes, count: int) -> np.ndarray:
    want = count * _F32.itemsize
    if len(body) < want:
        raise TruncatedError(f"{path}: payload has {len(body)} bytes, expected {want}")
    if len(body) > want:
        raise DimensionError(f"{path}: payload has {len(body) - want} trailing bytes")
    return np.frombuffer(body, dtype=_F32).astype(np.float64)


def write_image(path, image: Image) -> None:
    g = image.grid
    head = f"PAF1\n{g.n} {g.extent_m!r}\n".encode("ascii")
    Path(path).write_bytes(head + image.values.astype(_F32).tobytes())


def read_image(path) -> Image:
    (n, extent), body = _read_header(path, b"PAF1\n", 2)
    try:
        grid = make_grid(int(n), float(extent))
    except ValueError as exc:
        raise FormatError(f"{path}: bad header: {exc}") from None
    return Image(grid, _payload(path, body, grid.n ** 2))


def write_sensor_data(path, data: SensorData) -> None:
    head = f"PSD1\n{data.k} {data.m} {data.dt_s!r} {data.c_mps!r}\n".encode("ascii")
    Path(path).write_bytes(head + data.values.astype(_F32).tobytes())


def read_sensor_data(path) -> SensorData:
    (k, m, dt, c), body = _read_header(path, b"PSD1\n", 4)
    try:
        k, m, dt, c = int(k), int(m), float(dt), float(c)
    except ValueError:
        raise FormatError(f"{path}: bad header") from None
    if k < 1 or m < 1:
        raise DimensionError(f"{path}: bad dimensions {k}x{m}")
    return SensorData(k, m, dt, c, _payload(path, body, k * m))


def minmax(values: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a flat input maps to all zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def write_pgm(path, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError("PGM export needs a 2-D array")
    px = np.round(minmax(arr) * 255.0).astype(np.uint8)
    h, w = px.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary P5 reader (8 or 16 bit). Returns raw integer levels as float64."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise BadMagicError(f"{path}: not a binary PGM")
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedError(f"{path}: PGM header truncated")
        tokens.append(data[start:pos])
    pos += 1
    w, h, maxval = (int(t) for t in tokens)
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    want = w * h * dtype.itemsize
    body = data[pos:pos + want]
    if len(body) < want:
        raise TruncatedError(f"{path}: PGM payload truncated")
    return np.frombuffer(body, dtype=dtype).reshape(h, w).astype(np.float64)
