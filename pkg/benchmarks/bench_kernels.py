"""Timing comparison of the compiled kernels against the numpy fallback.

Runs every kernel on identical buffers through both backends, checks the
outputs are bit-identical (they must be; the fallback mirrors the compiled
rounding order), then reports the median wall time per call and the
speedup.  The compiled extension has to be importable; build it with
`pip install -e . --no-build-isolation` first.

    python3 benchmarks/bench_kernels.py --size 1048576 --repeats 100
"""

import argparse
import time

import numpy as np

from audiodiff.kernels import _fallback
from audiodiff.kernels import _core


def median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        times.append(time.perf_counter() - started)
    return float(np.median(times))


def make_cases(size: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(size)
    y = rng.standard_normal(size)
    z = rng.standard_normal(size)
    rows = rng.standard_normal((size // 8, 8))
    mu = rng.standard_normal(8)
    out_flat = np.empty(size)
    out_rows = np.empty_like(rows)
    return [
        ("axpby",
         lambda k: k.axpby(0.3, x, -1.7, y, out_flat)),
        ("guided_combine",
         lambda k: k.guided_combine(3.0, x, y, out_flat)),
        ("ancestral_update",
         lambda k: k.ancestral_update(x, y, 1.01, 0.02, 0.1, z, out_flat)),
        ("gaussian_eps",
         lambda k: k.gaussian_eps(rows, mu, 0.7, 0.9, out_rows)),
    ], out_flat, out_rows


def main() -> None:
    parser = argparse.ArgumentParser(
        description="benchmark compiled vs fallback kernels")
    parser.add_argument("--size", type=int, default=1 << 20,
                        help="elements per buffer (default 2^20)")
    parser.add_argument("--repeats", type=int, default=100,
                        help="calls per timing; the median is reported")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if args.size < 8 or args.repeats < 1:
        parser.error("--size must be >= 8 and --repeats >= 1")

    cases, out_flat, out_rows = make_cases(args.size, args.seed)

    # parity first; a timing of two different computations means nothing
    for name, call in cases:
        call(_core)
        compiled = (out_rows if name == "gaussian_eps" else out_flat).copy()
        call(_fallback)
        fallback = out_rows if name == "gaussian_eps" else out_flat
        if not np.array_equal(compiled, fallback):
            raise SystemExit(f"{name}: backends disagree, aborting")

    print(f"size={args.size} repeats={args.repeats} (median per call)")
    print(f"{'kernel':<18}{'compiled':>12}{'fallback':>12}{'speedup':>10}")
    for name, call in cases:
        t_core = median_time(lambda: call(_core), args.repeats)
        t_fb = median_time(lambda: call(_fallback), args.repeats)
        print(f"{name:<18}{t_core * 1e3:>10.3f}ms{t_fb * 1e3:>10.3f}ms"
              f"{t_fb / t_core:>9.2f}x")


if __name__ == "__main__":
    main()
