"""Command-line entry point: ``pathis <command> [options]``.

Commands: phantom, simulate, recon, metrics, convert, experiment.
Exit codes: 0 success, 1 usage or configuration error, 2 I/O or file
format error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import kernels
from .core import (
    DEFAULT_C_MPS,
    DEFAULT_EXTENT_M,
    DEFAULT_RADIUS_M,
    ConfigError,
    FormatError,
    Image,
    NumericError,
    PathisError,
    default_time_config,
    make_grid,
    make_sensor_arc,
    read_config,
    read_image,
    read_pgm,
    read_sensor_data,
    write_image,
    write_pgm,
    write_sensor_data,
)
from .forward import KERNELS, ForwardOperator, add_noise, forward
from .metrics import evaluate
from .phantoms import KINDS, PhantomSpec, from_file, generate
from .recon import HisConfig, MbConfig, reconstruct_his, reconstruct_mb, reconstruct_tr, reconstruct_ubp
from .wave import FdtdConfig, fdtd_forward

log = logging.getLogger("pathis")

METHODS = ("ubp", "tr", "mb", "his")
SOURCES = ("fdtd", "analytic")
DEFAULT_SPANS = (360.0, 180.0, 120.0, 90.0, 70.0)

PRESETS = {
    "desk": {"n": 64, "sensors": 128, "epochs": 2000},
    "paper": {"n": 440, "sensors": 512, "epochs": 10000},
}

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for I/O here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (NumericError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_IO
    return EXIT_USAGE


# ---------------------------------------------------------------------------
# threads and determinism


_blas_limiter = None


def configure_threads(threads: int | None, deterministic: bool) -> int:
    """Apply the thread count to the compiled kernels and to BLAS."""
    global _blas_limiter
    if threads is None:
        env = os.environ.get("PATHIS_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    kernels.set_threads(threads)
    # the kernels give identical results for any thread count, BLAS does not
    blas = 1 if deterministic else threads
    from threadpoolctl import threadpool_limits
    _blas_limiter = threadpool_limits(limits=blas)
    return threads


# ---------------------------------------------------------------------------
# geometry sidecar written next to every .psd


def geom_path(data_path) -> Path:
    return Path(str(data_path) + ".geom")


def write_geometry(path, **values) -> None:
    lines = [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_geometry(path) -> dict[str, str]:
    p = Path(path)
    return read_config(p) if p.exists() else {}


# ---------------------------------------------------------------------------
# individual commands


def _preset(args, key):
    value = getattr(args, key, None)
    return PRESETS[args.preset][key] if value is None else value


def _write_any_image(path, image: Image) -> None:
    if str(path).lower().endswith(".pgm"):
        write_pgm(path, image.array)
    else:
        write_image(path, image)


def cmd_phantom(args) -> int:
    seed = args.seed if args.seed is not None else 0
    spec = PhantomSpec(args.kind, seed, _preset(args, "n"), args.complexity, args.extent)
    _write_any_image(args.out, generate(spec))
    return EXIT_OK


def simulate_data(x: Image, sensors, source: str, kernel: str = "cylindrical",
                  fdtd: FdtdConfig | None = None, noise: float = 0.0, seed: int = 0):
    time_cfg = default_time_config(x.grid, sensors, DEFAULT_C_MPS)
    if source == "fdtd":
        y = fdtd_forward(x, sensors, time_cfg, fdtd or FdtdConfig())
    elif source == "analytic":
        y = forward(ForwardOperator(x.grid, sensors, time_cfg, kernel), x)
    else:
        raise ConfigError(f"unknown source {source!r}; choose from {SOURCES}")
    return add_noise(y, noise, seed)


def cmd_simulate(args) -> int:
    x = _load_any(args.phantom, args.extent)
    k = _preset(args, "sensors")
    sensors = make_sensor_arc(k, args.radius, args.span, args.center)
    fdtd = FdtdConfig(refine=args.refine)
    y = simulate_data(x, sensors, args.source, args.kernel, fdtd, args.noise, args.seed or 0)
    write_sensor_data(args.out, y)
    write_geometry(geom_path(args.out), n=x.grid.n, extent_m=x.grid.extent_m, radius_m=args.radius,
                   span_deg=float(args.span), center_deg=float(args.center), source=args.source)
    return EXIT_OK


def _recon_geometry(args, y):
    geo = read_geometry(args.geom or geom_path(args.data))

    def pick(name, key, conv, default):
        v = getattr(args, name, None)
        if v is not None:
            return v
        return conv(geo[key]) if key in geo else default

    n = pick("n", "n", int, PRESETS[args.preset]["n"])
    extent = pick("extent", "extent_m", float, DEFAULT_EXTENT_M)
    radius = pick("radius", "radius_m", float, DEFAULT_RADIUS_M)
    span = pick("span", "span_deg", float, 360.0)
    center = pick("center", "center_deg", float, 90.0)
    grid = make_grid(n, extent)
    sensors = make_sensor_arc(y.k, radius, span, center)
    return grid, sensors


def run_method(method: str, y, grid, sensors, *, kernel="cylindrical", mb: MbConfig | None = None,
               his: HisConfig | None = None, fdtd: FdtdConfig | None = None, log_path=None):
    time_cfg = y.time_config()
    if method == "ubp":
        return reconstruct_ubp(y, grid, sensors, time_cfg)
    if method == "tr":
        return reconstruct_tr(y, grid, sensors, replace(fdtd or FdtdConfig(), c_mps=y.c_mps))
    op = ForwardOperator(grid, sensors, time_cfg, kernel)
    if method == "mb":
        return reconstruct_mb(y, op, mb or MbConfig()).image
    if method == "his":
        image, train_log = reconstruct_his(y, op, his or HisConfig())
        if log_path:
            train_log.write_csv(log_path)
        return image
    raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")


def cmd_recon(args) -> int:
    y = read_sensor_data(args.data)
    grid, sensors = _recon_geometry(args, y)
    his = HisConfig(epochs=_preset(args, "epochs"), lr=args.lr, l=args.features, sigma=args.sigma,
                    seed=args.seed or 0, gain_mode=args.gain_mode)
    mb = MbConfig(lam=args.lam, eps_tv=args.eps_tv, iters=args.iters)
    image = run_method(args.method, y, grid, sensors, kernel=args.kernel, mb=mb, his=his,
                       fdtd=FdtdConfig(refine=args.refine), log_path=args.log)
    _write_any_image(args.out, image)
    return EXIT_OK


def _load_any(path, extent_m: float = DEFAULT_EXTENT_M) -> Image:
    """A .paf image as stored, or a PGM rescaled to [0, 1]."""
    if Path(path).read_bytes()[:4] == b"PAF1":
        return read_image(path)
    return from_file(path, extent_m)


def cmd_metrics(args) -> int:
    rep = evaluate(_load_any(args.a), _load_any(args.b))
    sys.stdout.write("psnr_db,ssim\n")
    sys.stdout.write(f"{rep.psnr_db:.6f},{rep.ssim:.6f}\n")
    return EXIT_OK


def cmd_convert(args) -> int:
    src = Path(args.input)
    head = src.read_bytes()[:4]
    if str(args.out).lower().endswith(".pgm"):
        arr = read_image(src).array if head == b"PAF1" else read_pgm(src)
        write_pgm(args.out, arr)
    else:
        write_image(args.out, from_file(src, args.extent))
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment harness


@dataclass
class ExperimentConfig:
    phantoms: list[PhantomSpec]
    sensors: int = 128
    spans_deg: tuple[float, ...] = DEFAULT_SPANS
    methods: tuple[str, ...] = METHODS
    source: str = "fdtd"
    out_dir: str = "experiment"
    seed: int = 0
    radius_m: float = DEFAULT_RADIUS_M
    noise: float = 0.0
    kernel: str = "cylindrical"
    fdtd: FdtdConfig = field(default_factory=FdtdConfig)
    mb: MbConfig = field(default_factory=MbConfig)
    his: HisConfig = field(default_factory=HisConfig)

    def validate(self) -> None:
        if not self.phantoms:
            raise ConfigError("experiment needs at least one phantom")
        if not self.methods:
            raise ConfigError("experiment needs at least one method")
        for s in self.spans_deg:
            if not (0.0 < s <= 360.0):
                raise ConfigError(f"span {s} outside (0, 360]")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if self.source not in SOURCES:
            raise ConfigError(f"unknown source {self.source!r}; choose from {SOURCES}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _coerce(template, value: str):
    if isinstance(template, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    try:
        return type(template)(value)
    except ValueError:
        raise ConfigError(f"cannot read {value!r} as {type(template).__name__}") from None


def _override(obj, key: str, value: str):
    if key not in obj.__dataclass_fields__:
        raise ConfigError(f"unknown setting {key!r} for {type(obj).__name__}")
    return replace(obj, **{key: _coerce(getattr(obj, key), value)})


def parse_experiment(values: dict[str, str], preset: str = "desk", seed: int | None = None) -> ExperimentConfig:
    """Build an experiment from ``key = value`` pairs.

    Keys: phantoms (kind:seed[:complexity], comma separated), n, extent_m,
    sensors, spans, methods, source, out_dir, seed, radius_m, noise, kernel,
    plus ``fdtd.*``, ``mb.*`` and ``his.*`` overrides of the method configs.
    """
    values = dict(values)
    preset = values.pop("preset", preset)
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    p = PRESETS[preset]
    base_seed = int(values.pop("seed", 0)) if seed is None else seed
    values.pop("seed", None)
    n = int(values.pop("n", p["n"]))
    extent = float(values.pop("extent_m", DEFAULT_EXTENT_M))
    specs = []
    for item in _split(values.pop("phantoms", "geometric")):
        parts = item.split(":")
        kind = parts[0]
        if kind not in KINDS:
            raise ConfigError(f"unknown phantom kind {kind!r}")
        pseed = int(parts[1]) if len(parts) > 1 else base_seed
        complexity = int(parts[2]) if len(parts) > 2 else 3
        specs.append(PhantomSpec(kind, pseed, n, complexity, extent))
    cfg = ExperimentConfig(
        phantoms=specs,
        sensors=int(values.pop("sensors", p["sensors"])),
        seed=base_seed,
        his=HisConfig(epochs=p["epochs"], seed=base_seed),
    )
    if "spans" in values:
        cfg.spans_deg = tuple(float(s) for s in _split(values.pop("spans")))
    if "methods" in values:
        cfg.methods = tuple(_split(values.pop("methods")))
    for key in ("source", "out_dir", "kernel"):
        if key in values:
            setattr(cfg, key, values.pop(key))
    for key in ("radius_m", "noise"):
        if key in values:
            setattr(cfg, key, float(values.pop(key)))
    for key, value in values.items():
        group, _, name = key.partition(".")
        if group in ("fdtd", "mb", "his") and name:
            setattr(cfg, group, _override(getattr(cfg, group), name, value))
        else:
            raise ConfigError(f"unknown experiment key {key!r}")
    cfg.validate()
    return cfg


def _fmt_span(span: float) -> str:
    return f"{span:g}"


def _data_file(cfg: ExperimentConfig, spec: PhantomSpec, span: float) -> Path:
    return Path(cfg.out_dir) / "data" / f"{spec.name()}_{_fmt_span(span)}.psd"


def _make_data(job):
    cfg, spec, span = job
    path = _data_file(cfg, spec, span)
    # never let a stale file from an earlier run stand in for a failed one
    path.unlink(missing_ok=True)
    x = generate(spec)
    sensors = make_sensor_arc(cfg.sensors, cfg.radius_m, span)
    y = simulate_data(x, sensors, cfg.source, cfg.kernel, cfg.fdtd, cfg.noise, cfg.seed)
    write_sensor_data(path, y)
    return path


def _run_cell(job):
    """One (sample, method, span) cell. Errors are returned, not raised."""
    cfg, spec, method, span = job
    t0 = time.perf_counter()
    try:
        x = generate(spec)
        # the stored float32 file is what every method sees
        y = read_sensor_data(_data_file(cfg, spec, span))
        sensors = make_sensor_arc(cfg.sensors, cfg.radius_m, span)
        stem = Path(cfg.out_dir) / "recon" / f"{spec.name()}_{method}_{_fmt_span(span)}"
        image = run_method(method, y, x.grid, sensors, kernel=cfg.kernel, mb=cfg.mb, his=cfg.his,
                           fdtd=cfg.fdtd, log_path=str(stem) + ".log.csv" if method == "his" else None)
        write_image(str(stem) + ".paf", image)
        rep = evaluate(image, x)
        row = (f"{rep.psnr_db:.6f}", f"{rep.ssim:.6f}", "ok")
    except Exception as exc:  # recorded, the sweep carries on
        row = ("error", "error", f"{type(exc).__name__}: {exc}")
    return row, time.perf_counter() - t0


def _init_worker(threads: int, deterministic: bool):
    configure_threads(threads, deterministic)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, threads: int = 1, deterministic: bool = False) -> Path:
    """Run the phantom x span x method sweep and write ``results.csv``.

    Rows are ordered sample, method, span. Wall times go to
    ``timings.csv`` so that ``results.csv`` depends on inputs alone.
    """
    out = Path(cfg.out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    (out / "recon").mkdir(parents=True, exist_ok=True)
    data_jobs = [(cfg, spec, span) for spec in cfg.phantoms for span in cfg.spans_deg]
    cells = [(cfg, spec, m, span) for spec in cfg.phantoms for m in cfg.methods for span in cfg.spans_deg]

    data_errors = {}
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(threads, deterministic)) as pool:
            futures = [pool.submit(_make_data, j) for j in data_jobs]
            for j, f in zip(data_jobs, futures):
                if f.exception() is not None:
                    data_errors[(j[1], j[2])] = f.exception()
            results = list(pool.map(_run_cell, cells))
    else:
        for j in data_jobs:
            try:
                _make_data(j)
            except Exception as exc:
                data_errors[(j[1], j[2])] = exc
        results = []
        for cell in cells:
            log.info("running %s %s %s", cell[1].name(), cell[2], _fmt_span(cell[3]))
            results.append(_run_cell(cell))
    for key, exc in data_errors.items():
        log.warning("data generation failed for %s at %s deg: %s", key[0].name(), _fmt_span(key[1]), exc)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample", "method", "span_deg", "psnr_db", "ssim"])
    tbuf = io.StringIO()
    tw = csv.writer(tbuf, lineterminator="\n")
    tw.writerow(["sample", "method", "span_deg", "seconds", "status"])
    for (_, spec, method, span), (row, seconds) in zip(cells, results):
        w.writerow([spec.name(), method, _fmt_span(span), row[0], row[1]])
        tw.writerow([spec.name(), method, _fmt_span(span), f"{seconds:.3f}", row[2]])
    (out / "results.csv").write_text(buf.getvalue())
    (out / "timings.csv").write_text(tbuf.getvalue())
    return out / "results.csv"


def cmd_experiment(args) -> int:
    values = read_config(args.config)
    if args.out_dir:
        values["out_dir"] = args.out_dir
    cfg = parse_experiment(values, args.preset, args.seed)
    path = run_experiment(cfg, args.jobs, kernels.get_threads(), args.deterministic)
    sys.stdout.write(path.read_text())
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _global_flags(p, top: bool) -> None:
    d = None if top else argparse.SUPPRESS
    p.add_argument("--deterministic", action="store_true", default=False if top else argparse.SUPPRESS,
                   help="pin BLAS to one thread so results are bit-reproducible")
    p.add_argument("--threads", type=int, default=d, help="worker threads (default: $PATHIS_THREADS or 1)")
    p.add_argument("--seed", type=int, default=d, help="seed for phantoms, noise and network init")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk" if top else argparse.SUPPRESS,
                   help="desk: n=64, 128 sensors, 2000 epochs; paper: n=440, 512 sensors, 10000 epochs")
    p.add_argument("-v", "--verbose", action="store_true", default=False if top else argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pathis", description="Limited-view photoacoustic reconstruction toolkit.")
    _global_flags(parser, True)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, False)
        p.set_defaults(func=func)
        return p

    p = add("phantom", cmd_phantom, "generate a procedural phantom")
    p.add_argument("--kind", choices=KINDS, default="geometric")
    p.add_argument("--n", type=int)
    p.add_argument("--complexity", type=int, default=3)
    p.add_argument("--extent", type=float, default=DEFAULT_EXTENT_M)
    p.add_argument("--out", required=True)

    p = add("simulate", cmd_simulate, "simulate sensor data for a phantom")
    p.add_argument("--phantom", required=True)
    p.add_argument("--sensors", type=int)
    p.add_argument("--span", type=float, default=360.0)
    p.add_argument("--center", type=float, default=90.0)
    p.add_argument("--radius", type=float, default=DEFAULT_RADIUS_M)
    p.add_argument("--extent", type=float, default=DEFAULT_EXTENT_M, help="extent for PGM input")
    p.add_argument("--source", choices=SOURCES, default="fdtd")
    p.add_argument("--kernel", choices=KERNELS, default="cylindrical")
    p.add_argument("--refine", type=int, default=FdtdConfig.refine)
    p.add_argument("--noise", type=float, default=0.0, help="noise std relative to max |y|")
    p.add_argument("--out", required=True)

    p = add("recon", cmd_recon, "reconstruct an image from sensor data")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS, default="his")
    p.add_argument("--out", required=True)
    p.add_argument("--geom", help="geometry file (default: DATA.geom)")
    p.add_argument("--n", type=int)
    p.add_argument("--extent", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--span", type=float)
    p.add_argument("--center", type=float)
    p.add_argument("--kernel", choices=KERNELS, default="cylindrical")
    p.add_argument("--refine", type=int, default=FdtdConfig.refine)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, default=HisConfig.lr)
    p.add_argument("--features", type=int, default=HisConfig.l)
    p.add_argument("--sigma", type=float, default=HisConfig.sigma)
    p.add_argument("--gain-mode", choices=("off", "auto"), default="off")
    p.add_argument("--lam", type=float, default=MbConfig.lam)
    p.add_argument("--eps-tv", type=float, default=MbConfig.eps_tv)
    p.add_argument("--iters", type=int, default=MbConfig.iters)
    p.add_argument("--log", help="write the HIS training log as CSV")

    p = add("metrics", cmd_metrics, "PSNR and SSIM between two images")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)

    p = add("convert", cmd_convert, "convert between .paf and binary PGM")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--extent", type=float, default=DEFAULT_EXTENT_M)

    p = add("experiment", cmd_experiment, "run a phantom x span x method sweep")
    p.add_argument("config")
    p.add_argument("--out-dir")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        configure_threads(args.threads, args.deterministic)
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be >= 1")
        return args.func(args)
    except PathisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
