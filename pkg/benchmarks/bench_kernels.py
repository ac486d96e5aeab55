"""Time the numba kernels against the numpy fallback on one synthetic frame.

    python3 benchmarks/bench_kernels.py --size 2000x1332 --repeat 5
"""

import argparse
import time

import numpy as np

from rawdet.core import CFA
from rawdet.kernels import box_weights, get_backend


def _best(fn, repeat):
    fn()  # warm-up, includes JIT compile for numba
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="2000x1332", help="WxH, both even")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    w, h = (int(v) for v in args.size.lower().split("x"))

    g = np.random.default_rng(args.seed)
    rgb = g.uniform(0, 1, (h, w, 3))
    z = g.standard_normal((h, w))
    grid = CFA.RGGB.channel_grid()
    iy, wy = box_weights(h, h // 3)
    ix, wx = box_weights(w, w // 3)

    backends = {name: get_backend(name) for name in ("numpy", "numba")}
    raw = backends["numpy"].mosaic(rgb, grid)
    cases = {
        "mosaic": lambda k: k.mosaic(rgb, grid),
        "demosaic": lambda k: k.demosaic(raw, grid),
        "add_noise": lambda k: k.add_noise(raw, z, 1e-3, 1e-5),
        "quantize": lambda k: k.quantize(raw, 0.0, 65535.0),
        "box_downsample": lambda k: k.box_downsample(rgb, iy, wy, ix, wx),
    }

    print(f"{'kernel':<16}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}  equal")
    for name, fn in cases.items():
        a, b = fn(backends["numpy"]), fn(backends["numba"])
        same = a.dtype == b.dtype and np.array_equal(a, b)
        t_np = _best(lambda: fn(backends["numpy"]), args.repeat)
        t_nb = _best(lambda: fn(backends["numba"]), args.repeat)
        print(f"{name:<16}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
