"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 64] [--sensors 128] [--repeat 5]

Both backends are called on identical inputs; the script also reports the
largest difference between their outputs.
"""
import argparse
import time

import numpy as np

from pathis import _fallback, kernels
from pathis.core import Rng, default_time_config, make_grid, make_sensor_arc
from pathis.forward import ForwardOperator
from pathis.wave import Domain, FdtdConfig


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--sensors", type=int, default=128)
    ap.add_argument("--steps", type=int, default=200, help="leapfrog steps per call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    kernels.set_threads(args.threads)

    try:
        from pathis import _ext
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1

    g = make_grid(args.n, 0.05)
    s = make_sensor_arc(args.sensors, 0.022, 360)
    op = ForwardOperator(g, s, default_time_config(g, s))
    x = Rng(0).uniform(g.n ** 2)
    z = Rng(1).normal(s.k * op.time.m_samples).reshape(s.k, -1)
    dom = Domain(g, FdtdConfig(refine=2))
    p0 = np.zeros((dom.size, dom.size))
    p0[dom.size // 2, dom.size // 2] = 1.0
    prev, cur = dom.start(p0)
    rec = dom.node_index(s.positions)

    cases = {
        "splat": lambda impl: kernels.splat(x, op._sens, op._px, op._py, op.inv_cdt, op.time.m_samples, impl=impl),
        "gather": lambda impl: kernels.gather(z, op._sens, op._px, op._py, op.inv_cdt, impl=impl),
        "leapfrog": lambda impl: kernels.leapfrog(prev.copy(), cur.copy(), dom.coef, dom.taper, args.steps,
                                                  rec, impl=impl)[0],
    }
    print(f"n={args.n} sensors={args.sensors} fdtd grid={dom.size}^2 x {args.steps} steps, "
          f"threads={args.threads}, best of {args.repeat}")
    print(f"{'kernel':<10}{'cython [ms]':>13}{'numpy [ms]':>13}{'speed-up':>10}{'max |diff|':>13}")
    for name, fn in cases.items():
        tc, oc = best_of(lambda: fn(_ext), args.repeat)
        tn, on = best_of(lambda: fn(_fallback), args.repeat)
        diff = float(np.abs(np.asarray(oc) - np.asarray(on)).max())
        print(f"{name:<10}{1e3 * tc:>13.2f}{1e3 * tn:>13.2f}{tn / tc:>9.1f}x{diff:>13.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
